import json
import sys
from pathlib import Path
from typing import Any, Optional

import numpy as np
import pandas as pd

FLOAT_DIGITS = 12


def round_floats(value: Any, digits: int = FLOAT_DIGITS) -> Any:
    """Recursively rounds floats to `digits` significant digits so artifacts diff cleanly."""
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (float, np.floating)):
        return float(f"{float(value):.{digits}g}")
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, dict):
        return {k: round_floats(v, digits) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [round_floats(v, digits) for v in value]
    if isinstance(value, np.ndarray):
        return [round_floats(v, digits) for v in value.tolist()]
    return value


def dumps_json(payload: Any) -> str:
    return json.dumps(round_floats(payload), indent=2, ensure_ascii=False) + "\n"


def write_text(text: str, path: Optional[str]) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(text, encoding="utf-8")


def dataframe_to_csv(df: pd.DataFrame) -> str:
    return df.to_csv(index=False, float_format=f"%.{FLOAT_DIGITS}g", lineterminator="\n")
