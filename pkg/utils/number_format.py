"""Shortest round-trip number formatting for CSV artifacts"""

from typing import Iterable, List

import numpy as np


class NumberFormatter:
    @staticmethod
    def format_float(value) -> str:
        """Shortest decimal that parses back to the same float of its own width"""
        if isinstance(value, np.floating):
            scalar = value
        else:
            scalar = np.float64(value)
        if np.isnan(scalar):
            return "nan"
        if np.isinf(scalar):
            return "inf" if scalar > 0 else "-inf"
        return np.format_float_positional(scalar, unique=True, trim="-")

    @staticmethod
    def format_row(values: Iterable) -> List[str]:
        return [NumberFormatter.format_float(v) for v in values]

    @staticmethod
    def format_ratio(value: float, digits: int = 6) -> str:
        """Fixed-precision rendering used for console summaries"""
        return f"{value:.{digits}f}"
