from .ingest_engine import IngestEngine
from .synthetic import PlantedData, generate_planted, labels_for

__all__ = ['IngestEngine', 'PlantedData', 'generate_planted', 'labels_for']
