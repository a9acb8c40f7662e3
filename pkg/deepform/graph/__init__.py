from .graph_engine import GraphEngine, UserGraph

__all__ = ['GraphEngine', 'UserGraph']
