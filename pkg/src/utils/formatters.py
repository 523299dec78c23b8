# src/utils/formatters.py
import numpy as np
import pandas as pd


def format_estimate(value, digits: int = 6) -> str:
    """
    Formats an estimate for console tables.

    Args:
        value: number, NaN or None

    Returns:
        str: '-' for missing values, scientific notation for very small or
        very large magnitudes, fixed notation otherwise
    """
    if value is None or pd.isna(value):
        return "-"
    value = float(value)
    if np.isinf(value):
        return "-inf" if value < 0 else "inf"
    if value != 0.0 and (abs(value) < 1e-3 or abs(value) >= 1e6):
        return f"{value:.{digits - 1}e}"
    return f"{value:.{digits}g}"


def format_gain(value) -> str:
    """Gain factors like '12.3x'."""
    if value is None or pd.isna(value):
        return "-"
    value = float(value)
    if value >= 100:
        return f"{value:,.0f}x"
    return f"{value:.3g}x"


def format_seconds(value) -> str:
    if value is None or pd.isna(value):
        return "-"
    value = float(value)
    if value < 1e-3:
        return f"{value * 1e6:.0f} us"
    if value < 1.0:
        return f"{value * 1e3:.1f} ms"
    return f"{value:.2f} s"


def format_n(n) -> str:
    """Powers of two print as 2^k."""
    n = int(n)
    if n > 1 and n & (n - 1) == 0:
        return f"2^{n.bit_length() - 1}"
    return str(n)


def format_table_for_display(df: pd.DataFrame) -> pd.DataFrame:
    """Copy of a gain table with every column formatted for the console."""
    if df is None or df.empty:
        return df
    display_df = df.copy()
    for col in display_df.columns:
        if col == 'n':
            display_df[col] = display_df[col].apply(format_n)
        elif col == 'seconds':
            display_df[col] = display_df[col].apply(format_seconds)
        elif col == 'gain':
            display_df[col] = display_df[col].apply(format_gain)
        elif col in ('mean', 'variance', 'mse', 'estimate', 'reference'):
            display_df[col] = display_df[col].apply(format_estimate)
    return display_df
