"""
Data module for the prioritization toolkit
Contains architecture presets and synthetic dataset generators
"""

from .architectures import LENET5_SHAPES, MLP_WIDTHS, lenet5_spec, mlp_spec
from .synthetic import GLYPH_PATTERNS, make_blobs, make_glyphs
