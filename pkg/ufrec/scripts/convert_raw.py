"""
Convert raw review dumps into the `user item item ...` text format.

    python ufrec/scripts/convert_raw.py amazon reviews_Beauty_5.json out/beauty.txt
    python ufrec/scripts/convert_raw.py yelp yelp_academic_dataset_review.json out/yelp.txt --since 2019-01-01

Amazon dumps carry reviewerID / asin / unixReviewTime, Yelp dumps carry
user_id / business_id / date. Interactions are ordered per user by time,
ties kept in file order. k-core filtering is left to `cli.py prepare`.
"""
import argparse
import sys
from pathlib import Path
from typing import Optional, Sequence

import pandas as pd

if __package__ in (None, ""):
    sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from utils.constants import EXIT_DATA_ERROR, EXIT_OK  # noqa: E402
from utils.exceptions import DataError  # noqa: E402
from utils.logger import get_logger  # noqa: E402

logger = get_logger()

# source -> (user column, item column, time column)
COLUMNS = {
    "amazon": ("reviewerID", "asin", "unixReviewTime"),
    "yelp": ("user_id", "business_id", "date"),
}


def read_reviews(path: Path, source: str, chunksize: Optional[int] = None) -> pd.DataFrame:
    """
    Read a JSON-lines review dump into a user / item / timestamp frame.

    Raises:
        DataError: Unreadable file or missing columns
    """
    user_col, item_col, time_col = COLUMNS[source]
    try:
        if chunksize:
            frames = [chunk[[user_col, item_col, time_col]]
                      for chunk in pd.read_json(path, lines=True, chunksize=chunksize)]
            df = pd.concat(frames, ignore_index=True)
        else:
            df = pd.read_json(path, lines=True)[[user_col, item_col, time_col]]
    except (OSError, ValueError) as e:
        raise DataError(f"cannot read {source} dump {path}: {e}") from e
    except KeyError as e:
        raise DataError(f"{path} lacks column {e} expected for {source} dumps") from e

    df = df.rename(columns={user_col: "user", item_col: "item", time_col: "timestamp"})
    if source == "amazon":
        df["timestamp"] = pd.to_datetime(df["timestamp"], unit="s")
    else:
        df["timestamp"] = pd.to_datetime(df["timestamp"])
    logger.info(f"Read {len(df)} {source} reviews from {path}")
    return df


def to_sequences(df: pd.DataFrame, since: Optional[str] = None, until: Optional[str] = None) -> pd.Series:
    """Chronological item lists per user, users in first-appearance order."""
    if since:
        df = df[df["timestamp"] >= pd.Timestamp(since)]
    if until:
        df = df[df["timestamp"] < pd.Timestamp(until)]
    df = df.assign(order=range(len(df))).sort_values(["timestamp", "order"], kind="stable")
    grouped = df.groupby("user", sort=False)["item"].apply(list)
    first_seen = df.sort_values("order").drop_duplicates("user")["user"]
    return grouped.reindex(first_seen.values)


def write_sequences(sequences: pd.Series, out_path: Path) -> int:
    """Write one `user item item ...` line per user; returns the number of lines."""
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "w", encoding="utf-8") as f:
        for user, items in sequences.items():
            f.write(f"{user} {' '.join(str(i) for i in items)}\n")
    logger.info(f"Wrote {len(sequences)} user sequences to {out_path}")
    return len(sequences)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = argparse.ArgumentParser(description="Convert Amazon / Yelp review dumps to sequence text")
    parser.add_argument("source", choices=sorted(COLUMNS))
    parser.add_argument("raw", type=Path)
    parser.add_argument("out", type=Path)
    parser.add_argument("--since", default=None, help="Keep reviews at or after this date")
    parser.add_argument("--until", default=None, help="Keep reviews before this date")
    parser.add_argument("--chunksize", type=int, default=None, help="Stream large dumps in chunks")
    args = parser.parse_args(argv)
    try:
        df = read_reviews(args.raw, args.source, args.chunksize)
        write_sequences(to_sequences(df, args.since, args.until), args.out)
    except DataError as e:
        logger.error(str(e))
        return EXIT_DATA_ERROR
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
