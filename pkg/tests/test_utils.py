"""
Tests for utility functions in detlp/utils.py.

Tests cover:
- Time utilities (now_ms)
- Formatting and truncation of efficiencies
- Decimal parsing and shortest round-trip output
"""
import time

import pytest

from detlp.utils import decimal_str, fmt, now_ms, parse_decimal, truncate


class TestTimeUtils:
    """Test time-related utility functions."""

    @pytest.mark.unit
    def test_now_ms_returns_integer(self):
        """Test that now_ms returns an integer timestamp in milliseconds."""
        result = now_ms()
        assert isinstance(result, int)
        assert abs(result - int(time.time() * 1000)) < 10000


class TestFormatting:
    """Test number formatting utilities."""

    @pytest.mark.unit
    @pytest.mark.parametrize("value,nd,expected", [
        (0.9, 6, "0.900000"),
        (0.8284271247461903, 6, "0.828427"),
        (0.8333333333333334, 4, "0.8333"),
        (1.0, 0, "1"),
    ])
    def test_fmt(self, value, nd, expected):
        assert fmt(value, nd) == expected

    @pytest.mark.unit
    def test_fmt_default_six_places(self):
        """Efficiencies print with 6 decimals by default."""
        assert fmt(0.5) == "0.500000"

    @pytest.mark.unit
    @pytest.mark.parametrize("value,nd,expected", [
        (0.8284271247461903, 4, 0.8284),
        (0.9142135623730951, 4, 0.9142),
        (0.89999999, 4, 0.8999),
        (0.9, 4, 0.9),
        (0.29, 2, 0.29),
        (-0.12345, 2, -0.12),
    ])
    def test_truncate(self, value, nd, expected):
        """Truncation goes toward zero without binary-noise artefacts."""
        assert truncate(value, nd) == pytest.approx(expected, abs=1e-12)


class TestDecimals:
    """Test decimal string parsing and output."""

    @pytest.mark.unit
    @pytest.mark.parametrize("raw,expected", [
        ("0.125", 0.125),
        ("0.1", 0.1),
        (0.25, 0.25),
        (1, 1.0),
        ("1e-3", 0.001),
    ])
    def test_parse_decimal(self, raw, expected):
        assert parse_decimal(raw) == expected

    @pytest.mark.unit
    @pytest.mark.parametrize("raw", ["abc", "nan", "inf", None, True, [0.5]])
    def test_parse_decimal_rejects(self, raw):
        with pytest.raises(ValueError):
            parse_decimal(raw, "q")

    @pytest.mark.unit
    def test_parse_decimal_error_names_value(self):
        with pytest.raises(ValueError, match=r"q\[A1,B1\]"):
            parse_decimal("x", "q[A1,B1]")

    @pytest.mark.unit
    @pytest.mark.parametrize("value,expected", [
        (0.1, "0.1"),
        (0.0, "0.0"),
        (-0.0, "0.0"),
        (1.0, "1.0"),
        (0.375, "0.375"),
    ])
    def test_decimal_str(self, value, expected):
        assert decimal_str(value) == expected

    @pytest.mark.unit
    def test_decimal_str_round_trips(self):
        """Shortest representation parses back to the same float."""
        for x in (1 / 3, 0.8284271247461903, 1e-17, 0.07322330470336313):
            assert float(decimal_str(x)) == x
