"""
Flat-file artifacts exchanged between pipeline stages

Every stage reads and writes CSV through pandas with a fixed column order.
Floats are written in their shortest round-tripping form and read back with
``float_precision='round_trip'``, so a value survives any number of stage
hops unchanged.
"""
import hashlib
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Union

import numpy as np
import pandas as pd
from rest_framework.exceptions import ParseError
from rest_framework.parsers import JSONParser
from rest_framework.renderers import JSONRenderer

from apps.planning.domain import Portfolio, RunConfig
from apps.planning.evolution import Member
from apps.planning.exceptions import ArtifactError
from apps.planning.positioning import CandidateSet, PositioningReport
from apps.planning.sensitivity import SensitivityBand

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

CROSSEVAL = 'crosseval.csv'
POSITIONING = 'positioning.csv'
SENSITIVITY = 'sensitivity.csv'
BEST = 'best.csv'
CONFIG = 'config.json'
MANIFEST = 'manifest.json'


def front_name(scenario_index: int) -> str:
    return f"front_{scenario_index}.csv"


def trace_name(scenario_index: int) -> str:
    return f"trace_{scenario_index}.csv"


def count_columns(asset_count: int) -> List[str]:
    return [f"x_{i}" for i in range(asset_count)]


def success_columns(scenario_count: int) -> List[str]:
    return [f"succ_{j}" for j in range(scenario_count)]


def score_columns(scenario_count: int) -> List[str]:
    return [f"F_{j}" for j in range(scenario_count)]


# =================================================================
# CSV HELPERS
# =================================================================

def write_csv(frame: pd.DataFrame, path: PathLike) -> Path:
    path = Path(path)
    frame.to_csv(path, index=False, lineterminator='\n')
    logger.debug(f"Wrote {len(frame)} rows to {path}")
    return path


def read_csv(path: PathLike, columns: Sequence[str]) -> pd.DataFrame:
    """
    Load a stage input and check that its header is exactly ``columns``.

    Raises:
        ArtifactError: the file is missing, unreadable, or its columns differ
    """
    path = Path(path)
    if not path.is_file():
        raise ArtifactError(f"Missing stage input {path}")
    try:
        frame = pd.read_csv(path, float_precision='round_trip')
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise ArtifactError(f"Cannot parse {path}: {exc}") from exc

    found = list(frame.columns)
    expected = list(columns)
    if found != expected:
        missing = [c for c in expected if c not in found]
        unexpected = [c for c in found if c not in expected]
        raise ArtifactError(
            f"Schema mismatch in {path}: expected columns {expected}, found {found} "
            f"(missing {missing}, unexpected {unexpected})"
        )
    return frame


def _count_matrix(frame: pd.DataFrame, asset_count: int, path: PathLike) -> np.ndarray:
    columns = count_columns(asset_count)
    values = frame[columns].to_numpy()
    if len(values) and (not np.issubdtype(values.dtype, np.integer)):
        raise ArtifactError(f"Asset counts in {path} must be integers (columns {columns})")
    return values.astype(np.int64)


# =================================================================
# FRONTS
# =================================================================

def front_columns(asset_count: int, scenario_index: int) -> List[str]:
    return ['portfolio_id', *count_columns(asset_count), 'cost', f"succ_{scenario_index}"]


def front_frame(front: Sequence[Member], scenario_index: int, asset_count: int) -> pd.DataFrame:
    rows = [
        [row, *member.portfolio.counts, member.objectives.cost, member.objectives.success_rate]
        for row, member in enumerate(front)
    ]
    return pd.DataFrame(rows, columns=front_columns(asset_count, scenario_index))


def read_front(path: PathLike, scenario_index: int, config: RunConfig) -> List[Portfolio]:
    frame = read_csv(path, front_columns(config.catalog.size, scenario_index))
    counts = _count_matrix(frame, config.catalog.size, path)
    try:
        return [Portfolio.from_counts(row, config.x_max) for row in counts]
    except ValueError as exc:
        raise ArtifactError(f"Invalid portfolio in {path}: {exc}") from exc


# =================================================================
# CROSS-EVALUATION
# =================================================================

def crosseval_columns(asset_count: int, scenario_count: int) -> List[str]:
    return ['portfolio_id', *count_columns(asset_count), 'cost', *success_columns(scenario_count)]


def crosseval_frame(candidates: CandidateSet) -> pd.DataFrame:
    asset_count = len(candidates.portfolios[0].counts) if candidates.size else 0
    frame = pd.DataFrame(candidates.counts, columns=count_columns(asset_count))
    frame.insert(0, 'portfolio_id', np.arange(candidates.size))
    frame['cost'] = np.asarray(candidates.costs, dtype=float)
    for j, column in enumerate(success_columns(candidates.scenario_count)):
        frame[column] = candidates.success[:, j]
    return frame


def read_crosseval(path: PathLike, config: RunConfig) -> CandidateSet:
    frame = read_csv(path, crosseval_columns(config.catalog.size, config.space.size))
    if frame.empty:
        raise ArtifactError(f"No candidates in {path}")
    counts = _count_matrix(frame, config.catalog.size, path)
    try:
        portfolios = tuple(Portfolio.from_counts(row, config.x_max) for row in counts)
    except ValueError as exc:
        raise ArtifactError(f"Invalid portfolio in {path}: {exc}") from exc
    success = frame[success_columns(config.space.size)].to_numpy(dtype=float)
    return CandidateSet(portfolios, frame['cost'].to_numpy(dtype=float), success)


# =================================================================
# POSITIONING
# =================================================================

def positioning_frame(candidates: CandidateSet, report: PositioningReport) -> pd.DataFrame:
    frame = crosseval_frame(candidates).drop(columns=['cost', *success_columns(candidates.scenario_count)])
    for j, column in enumerate(score_columns(candidates.scenario_count)):
        frame[column] = report.scores[:, j]
    frame['robustness'] = report.robustness
    frame['risk'] = report.risk
    frame['adapt_cost'] = report.adapt_cost
    frame['robustness_display'] = report.robustness_display
    frame['risk_display'] = report.risk_display
    frame['adapt_cost_display'] = report.adapt_cost_display
    frame['nd_flag'] = report.non_dominated.astype(int)
    frame['shortlisted'] = report.shortlisted.astype(int)
    return frame


def best_frame(candidates: CandidateSet, report: PositioningReport) -> pd.DataFrame:
    """s_j^best per scenario with its counts and F_j"""
    asset_count = candidates.counts.shape[1]
    rows = [
        [j, int(index), *candidates.portfolios[index].counts, float(report.scores[index, j])]
        for j, index in enumerate(report.best)
    ]
    return pd.DataFrame(rows, columns=['scenario', 'portfolio_id', *count_columns(asset_count), 'F'])


def sensitivity_frame(bands: Iterable[SensitivityBand]) -> pd.DataFrame:
    frames = [
        pd.DataFrame({
            'portfolio_id': np.arange(len(band.nominal)),
            'metric': band.metric,
            'nominal': band.nominal,
            'q1': band.q1,
            'median': band.median,
            'q3': band.q3,
            'kind': band.kind,
        })
        for band in bands
    ]
    if not frames:
        return pd.DataFrame(columns=['portfolio_id', 'metric', 'nominal', 'q1', 'median', 'q3', 'kind'])
    return pd.concat(frames, ignore_index=True)


def trace_frame(records: List[dict]) -> pd.DataFrame:
    columns = ['portfolio_id', 'instance', 'future', 'time_point', 'demand_type', 'asset', 'units', 'residual']
    return pd.DataFrame(records, columns=columns)


# =================================================================
# MANIFEST
# =================================================================

def file_digest(path: PathLike) -> str:
    digest = hashlib.sha256()
    with open(path, 'rb') as handle:
        for chunk in iter(lambda: handle.read(1 << 16), b''):
            digest.update(chunk)
    return digest.hexdigest()


@dataclass
class RunManifest:
    """Inventory of a completed run; its presence marks the output directory complete"""
    version: str
    config_digest: str
    master_seed: int
    files: Dict[str, str] = field(default_factory=dict)
    timings: Dict[str, float] = field(default_factory=dict)

    @classmethod
    def collect(cls, out_dir: PathLike, names: Iterable[str], version: str, config_bytes: bytes,
                master_seed: int, timings: Optional[Dict[str, float]] = None) -> 'RunManifest':
        out_dir = Path(out_dir)
        return cls(
            version=version,
            config_digest=hashlib.sha256(config_bytes).hexdigest(),
            master_seed=master_seed,
            files={name: file_digest(out_dir / name) for name in sorted(names)},
            timings=dict(timings or {}),
        )

    def to_document(self) -> dict:
        return {
            'version': self.version,
            'config_digest': self.config_digest,
            'master_seed': self.master_seed,
            'files': self.files,
            'timings': {stage: round(seconds, 6) for stage, seconds in self.timings.items()},
        }

    def write(self, out_dir: PathLike) -> Path:
        path = Path(out_dir) / MANIFEST
        path.write_bytes(JSONRenderer().render(self.to_document(), renderer_context={'indent': 2}))
        return path

    @classmethod
    def read(cls, out_dir: PathLike) -> 'RunManifest':
        path = Path(out_dir) / MANIFEST
        if not path.is_file():
            raise ArtifactError(f"No manifest in {out_dir}")
        try:
            with open(path, 'rb') as handle:
                document = JSONParser().parse(handle)
            return cls(**document)
        except (ParseError, TypeError) as exc:
            raise ArtifactError(f"Invalid manifest {path}: {exc}") from exc

    def verify(self, out_dir: PathLike) -> List[str]:
        """Names of listed files that are missing or whose content changed"""
        out_dir = Path(out_dir)
        return [
            name for name, digest in self.files.items()
            if not (out_dir / name).is_file() or file_digest(out_dir / name) != digest
        ]
