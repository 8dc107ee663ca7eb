"""Exact p-adic shell volumes, character sums, and twisted character
values on GL(4), computed by enumeration over residue rings and checked
against closed-form tables."""

from .localfield import (
    CharDescriptor,
    PrimeContext,
    ResidueElement,
    SquareClass,
    chi_eval,
    legendre,
    square_class,
)
from .quadforms import QuadForm4, canonical_form, is_isotropic, verify_equivalence
from .volumes import (
    CharSumProfile,
    VolumeProfile,
    char_profile,
    closed_form_profile,
    shell_integral,
    vol_profile,
)
from .series import QPowerValue, anisotropic_value, eval_at_s0, fit_tail
from .classes import ThetaClass, jacobian_factor, norm_map, representative
from .character import (
    CharacterValue,
    expected_value,
    stable_class_sum,
    twisted_character_value,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
