from dataclasses import dataclass, field
from datetime import datetime
from importlib import metadata as importlib_metadata
import platform
from typing import Any, Dict, List, Optional

TRACKED_PACKAGES = ("numpy", "scipy", "pandas", "scikit-learn", "matplotlib")


def collect_versions() -> Dict[str, str]:
    """Versions of the interpreter and the numerical stack."""
    versions = {"python": platform.python_version()}
    for name in TRACKED_PACKAGES:
        try:
            versions[name] = importlib_metadata.version(name)
        except importlib_metadata.PackageNotFoundError:
            versions[name] = "missing"
    return versions


@dataclass
class RunManifest:
    """Record written next to the outputs of every command."""
    command: str
    config_hash: Optional[str] = None
    seed: Optional[int] = None
    inputs: List[str] = field(default_factory=list)
    outputs: List[str] = field(default_factory=list)
    versions: Dict[str, str] = field(default_factory=collect_versions)
    wall_time_seconds: float = 0.0
    created_at: str = field(default_factory=lambda: datetime.now().isoformat())
    extra: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        """Convert manifest to dictionary for serialization."""
        return {
            'command': self.command,
            'config_hash': self.config_hash,
            'seed': self.seed,
            'inputs': list(self.inputs),
            'outputs': list(self.outputs),
            'versions': dict(self.versions),
            'wall_time_seconds': self.wall_time_seconds,
            'created_at': self.created_at,
            'extra': dict(self.extra),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'RunManifest':
        """Create manifest from dictionary."""
        return cls(
            command=data['command'],
            config_hash=data.get('config_hash'),
            seed=data.get('seed'),
            inputs=list(data.get('inputs', [])),
            outputs=list(data.get('outputs', [])),
            versions=dict(data.get('versions', {})),
            wall_time_seconds=float(data.get('wall_time_seconds', 0.0)),
            created_at=data.get('created_at', datetime.now().isoformat()),
            extra=dict(data.get('extra', {})),
        )
