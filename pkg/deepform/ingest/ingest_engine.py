"""
Ingestion of raw interaction logs: parsing, filtering, splitting and rating
normalization.
"""

from dataclasses import replace
import io
import logging
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd
import scipy.sparse as sp

from deepform.errors import DataError, UsageError
from deepform.models.data.dataset import INTERACTION_COLUMNS, Dataset

logger = logging.getLogger(__name__)

DELIMITERS = {"tab": "\t", "comma": ",", "whitespace": r"\s+"}
DEFAULT_MIN_INTERACTIONS = 10
DEFAULT_SPLIT_RATIO = 0.8
MAX_MALFORMED_FRACTION = 0.01
LINE_COLUMN = "line"


def _number_lines(text: str, sep: str) -> str:
    """Prefix every non-blank line with its 1-based line number in the source file."""
    prefix = " " if sep == DELIMITERS["whitespace"] else sep
    return "\n".join(f"{number}{prefix}{line}"
                     for number, line in enumerate(text.splitlines(), start=1) if line.strip())


class IngestEngine:
    """
    Turns delimiter-separated interaction logs into an indexed Dataset.
    """

    @staticmethod
    def detect_delimiter(path: Path) -> str:
        """Pick tab or comma from the first non-empty line, else whitespace."""
        with open(path, "r", encoding="utf-8") as handle:
            for line in handle:
                if line.strip():
                    if "\t" in line:
                        return DELIMITERS["tab"]
                    if "," in line:
                        return DELIMITERS["comma"]
                    return DELIMITERS["whitespace"]
        return DELIMITERS["tab"]

    @staticmethod
    def empty_frame() -> pd.DataFrame:
        frame = pd.DataFrame({
            "user_id": pd.Series(dtype=str),
            "item_id": pd.Series(dtype=str),
            "rating": pd.Series(dtype=float),
            "timestamp": pd.Series(dtype="Int64"),
        })
        return frame

    @staticmethod
    def parse_interactions(
        path: str | Path,
        delimiter: Optional[str] = None,
        max_malformed_fraction: float = MAX_MALFORMED_FRACTION
    ) -> pd.DataFrame:
        """
        Parse an interaction log into a frame of InteractionRecord rows.

        Args:
            path: Input file with columns user_id, item_id, rating[, timestamp]
            delimiter: 'tab', 'comma', 'whitespace', a literal separator, or None to detect
            max_malformed_fraction: Fraction of malformed rows tolerated

        Returns:
            Frame with columns user_id, item_id, rating, timestamp, deduplicated
            per (user_id, item_id)

        Raises:
            DataError: If the file cannot be read or too many rows are malformed
        """
        path = Path(path)
        if not path.is_file():
            raise DataError(f"Interaction file not found: {path}")

        try:
            text = path.read_text(encoding="utf-8")
            if not text.strip():
                logger.warning(f"Interaction file {path} is empty")
                return IngestEngine.empty_frame()
            sep = DELIMITERS.get(delimiter, delimiter) if delimiter else IngestEngine.detect_delimiter(path)

            bad_lines: list[list[str]] = []

            # fields[0] is the source line number added by _number_lines
            def on_bad_line(fields: list[str]) -> None:
                bad_lines.append(fields)
                return None

            frame = pd.read_csv(
                io.StringIO(_number_lines(text, sep)),
                sep=sep,
                header=None,
                names=[LINE_COLUMN, *INTERACTION_COLUMNS],
                dtype=str,
                engine="python",
                on_bad_lines=on_bad_line,
                skip_blank_lines=True,
                keep_default_na=False,
            )
        except (OSError, UnicodeDecodeError, pd.errors.ParserError) as e:
            raise DataError(f"Failed to read interaction file {path}: {e}") from e

        rating = pd.to_numeric(frame["rating"], errors="coerce")
        timestamp_text = frame["timestamp"].fillna("").astype(str).str.strip()
        timestamp = pd.to_numeric(timestamp_text.mask(timestamp_text.eq("")), errors="coerce")

        malformed = (
            rating.isna()
            | ~np.isfinite(rating.fillna(0.0))
            | (rating < 0)
            | frame["user_id"].fillna("").str.strip().eq("")
            | frame["item_id"].fillna("").str.strip().eq("")
            | (timestamp_text.ne("") & timestamp.isna())
        )

        # A non-numeric rating on the first row is a header line
        if len(frame) and malformed.iloc[0] and pd.isna(rating.iloc[0]):
            keep_header = pd.Series(True, index=frame.index)
            keep_header.iloc[0] = False
            frame, rating, timestamp, malformed = (
                frame[keep_header], rating[keep_header], timestamp[keep_header], malformed[keep_header]
            )
            logger.debug(f"Skipped header line in {path}")

        n_total = len(frame) + len(bad_lines)
        n_bad = int(malformed.sum()) + len(bad_lines)
        if n_bad:
            bad_rows = sorted(frame.loc[malformed, LINE_COLUMN].astype(int).tolist()
                              + [int(fields[0]) for fields in bad_lines])
            if n_total and n_bad > max_malformed_fraction * n_total:
                raise DataError(
                    f"{n_bad} of {n_total} lines in {path} are malformed "
                    f"(limit {max_malformed_fraction:.0%}); lines: {bad_rows[:20]}"
                )
            logger.warning(f"Skipped {n_bad} malformed lines in {path}; lines: {bad_rows[:20]}")

        keep = ~malformed
        result = pd.DataFrame({
            "user_id": frame.loc[keep, "user_id"].str.strip(),
            "item_id": frame.loc[keep, "item_id"].str.strip(),
            "rating": rating[keep].astype(float),
            "timestamp": timestamp[keep].round().astype("Int64"),
        }).reset_index(drop=True)

        zero = result["rating"].eq(0.0)
        if zero.any():
            logger.warning(f"Dropped {int(zero.sum())} zero-valued ratings from {path}")
            result = result[~zero].reset_index(drop=True)

        result = IngestEngine.deduplicate(result)
        logger.info(f"Parsed {len(result)} interactions from {path}")
        return result

    @staticmethod
    def has_timestamps(frame: pd.DataFrame) -> bool:
        return len(frame) > 0 and bool(frame["timestamp"].notna().all())

    @staticmethod
    def deduplicate(frame: pd.DataFrame) -> pd.DataFrame:
        """Keep the last interaction per (user, item): by timestamp, else by file order."""
        if IngestEngine.has_timestamps(frame):
            ordered = frame.sort_values("timestamp", kind="stable")
            deduped = ordered.drop_duplicates(["user_id", "item_id"], keep="last").sort_index()
        else:
            deduped = frame.drop_duplicates(["user_id", "item_id"], keep="last")
        dropped = len(frame) - len(deduped)
        if dropped:
            logger.debug(f"Removed {dropped} duplicate (user, item) pairs")
        return deduped.reset_index(drop=True)

    @staticmethod
    def filter_min_interactions(frame: pd.DataFrame, min_count: int = DEFAULT_MIN_INTERACTIONS) -> pd.DataFrame:
        """
        Iteratively drop users and items with fewer than min_count interactions.

        Raises:
            UsageError: If min_count < 1
            DataError: If nothing survives
        """
        if min_count < 1:
            raise UsageError(f"min_count must be >= 1, got {min_count}")

        rounds = 0
        while True:
            user_counts = frame["user_id"].map(frame["user_id"].value_counts())
            item_counts = frame["item_id"].map(frame["item_id"].value_counts())
            keep = (user_counts >= min_count) & (item_counts >= min_count)
            if keep.all():
                break
            frame = frame[keep]
            rounds += 1

        if frame.empty:
            raise DataError("filter removed all data")
        logger.info(
            f"Filtering at {min_count} kept {frame['user_id'].nunique()} users, "
            f"{frame['item_id'].nunique()} items, {len(frame)} interactions after {rounds} rounds"
        )
        return frame.reset_index(drop=True)

    @staticmethod
    def subsample_active_users(frame: pd.DataFrame, n_users: int) -> pd.DataFrame:
        """Keep the n_users users with most interactions (ties by user id)."""
        counts = frame["user_id"].value_counts()
        ranked = sorted(counts.items(), key=lambda pair: (-pair[1], pair[0]))
        chosen = {user for user, _ in ranked[:n_users]}
        return frame[frame["user_id"].isin(chosen)].reset_index(drop=True)

    @staticmethod
    def split_train_test(frame: pd.DataFrame, ratio: float = DEFAULT_SPLIT_RATIO, seed: int = 0) -> Dataset:
        """
        Per-user split into training and held-out interactions.

        With timestamps the latest ceil((1-ratio)*n_u) interactions of a user are
        held out; without them the held-out set is drawn uniformly by seed. A
        user with a single interaction keeps it in training.

        Raises:
            UsageError: If ratio is not in (0, 1)
            DataError: If there are no interactions
        """
        if not 0 < ratio < 1:
            raise UsageError(f"split ratio must be in (0, 1), got {ratio}")
        if frame.empty:
            raise DataError("Cannot split an empty interaction set")

        work = frame.reset_index(drop=True).copy()
        work["order"] = np.arange(len(work))
        if IngestEngine.has_timestamps(work):
            work = work.sort_values(["user_id", "timestamp", "order"], kind="stable")
        else:
            rng = np.random.default_rng(seed)
            work["key"] = rng.random(len(work))
            work = work.sort_values(["user_id", "key"], kind="stable")

        grouped = work.groupby("user_id", sort=False)
        position = grouped.cumcount().to_numpy()
        n_user = grouped["item_id"].transform("size").to_numpy()
        n_test = np.ceil(np.round((1.0 - ratio) * n_user, 9)).astype(int)
        n_test = np.minimum(n_test, n_user - 1)
        is_test = position >= (n_user - n_test)

        singles = int(work.loc[n_user == 1, "user_id"].nunique())
        if singles:
            logger.warning(f"{singles} users have a single interaction; they are excluded from test metrics")

        user_ids = np.array(sorted(work["user_id"].unique()), dtype=object)
        item_ids = np.array(sorted(work["item_id"].unique()), dtype=object)
        rows = pd.Categorical(work["user_id"], categories=user_ids).codes
        cols = pd.Categorical(work["item_id"], categories=item_ids).codes
        values = work["rating"].to_numpy(dtype=np.float64)
        shape = (len(user_ids), len(item_ids))

        x_train = sp.csr_matrix((values[~is_test], (rows[~is_test], cols[~is_test])), shape=shape)
        x_test = sp.csr_matrix((values[is_test], (rows[is_test], cols[is_test])), shape=shape)
        dataset = Dataset(user_ids=user_ids, item_ids=item_ids, x_train=x_train, x_test=x_test,
                          metadata={"split_ratio": ratio, "seed": seed})
        logger.info(f"Split into {dataset}")
        return dataset

    @staticmethod
    def normalize_ratings(dataset: Dataset) -> Dataset:
        """
        Scale every training row to unit Euclidean norm (float32 storage).

        Raises:
            DataError: If a user has no training interaction
        """
        x = dataset.x_train.astype(np.float64)
        norms = np.sqrt(np.asarray(x.multiply(x).sum(axis=1)).ravel())
        if np.any(norms == 0):
            empty = np.flatnonzero(norms == 0)
            raise DataError(f"{len(empty)} users have an empty training row, e.g. index {empty[0]}")
        normalized = sp.diags(1.0 / norms) @ x
        normalized = sp.csr_matrix(normalized, dtype=np.float32)
        normalized.sort_indices()
        return replace(dataset, x_train=normalized, normalized=True, metadata=dict(dataset.metadata))

    @staticmethod
    def build_dataset(
        path: str | Path,
        delimiter: Optional[str] = None,
        min_count: int = DEFAULT_MIN_INTERACTIONS,
        ratio: float = DEFAULT_SPLIT_RATIO,
        seed: int = 0,
        max_users: Optional[int] = None
    ) -> Dataset:
        """Parse, filter, optionally subsample, split and normalize in one call."""
        frame = IngestEngine.parse_interactions(path, delimiter)
        frame = IngestEngine.filter_min_interactions(frame, min_count)
        if max_users:
            frame = IngestEngine.subsample_active_users(frame, max_users)
        dataset = IngestEngine.split_train_test(frame, ratio, seed)
        dataset = IngestEngine.normalize_ratings(dataset)
        dataset.metadata.update({"source_file": str(path), "min_count": min_count})
        return dataset
