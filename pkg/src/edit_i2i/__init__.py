"""Exemplar-domain aware image-to-image translation.

One generator serves every domain: a shared encoder and residual trunk extract
content, and the decoder runs on weights produced per exemplar and domain
label by a parameter network.
"""

from .core import Config, DomainLabel, GeneratorSpec, default_generator_spec, make_onehot
from .generator import Generator, param_count
from .param_net import FixedBackbone, ParamNet, interpolate

__all__ = [
    "Config",
    "DomainLabel",
    "FixedBackbone",
    "Generator",
    "GeneratorSpec",
    "ParamNet",
    "default_generator_spec",
    "interpolate",
    "make_onehot",
    "param_count",
]
