"""Optimal dynamic control limits, equivalent thresholds and calibration."""

from .grid import (GridSpec, NumericalFailure, UnsupportedConfiguration, ValueGrid, backward_limits,
                   single_crossing)
from .equivalent import BracketError, EquivalentLimitTable, equivalent_limits

__all__ = [
    "GridSpec", "ValueGrid", "backward_limits", "single_crossing", "EquivalentLimitTable",
    "equivalent_limits", "NumericalFailure", "UnsupportedConfiguration", "BracketError",
]

from .calibrate import (CalibrationFailure, CalibrationResult, FormulaValue, InfeasibleTarget, NullPaths,
                        calibrate, limits_for, value_formula)

__all__ += ["calibrate", "CalibrationResult", "CalibrationFailure", "InfeasibleTarget", "NullPaths",
            "limits_for", "value_formula", "FormulaValue"]

from .persist import LimitFile, LimitFileError, load_limits, save_limits

__all__ += ["LimitFile", "LimitFileError", "load_limits", "save_limits"]
