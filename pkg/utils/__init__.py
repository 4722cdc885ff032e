from .number_format import NumberFormatter
from .rng import SplitMix64
