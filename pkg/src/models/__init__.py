"""
Bundled Feynman-Kac models, looked up by name.

Each entry knows how to read its namespaced parameters from a key=value
mapping, build the bootstrap filter model and simulate data.
"""
from dataclasses import dataclass
from typing import Callable, Dict, Optional

from src.models.linear_gaussian import (LinearGaussianParams, build_linear_gaussian, kalman_suite,
                                        simulate_linear_gaussian)
from src.models.msv import MsvParams, build_msv, simulate_msv
from src.models.neural import NeuralDecodingParams, build_neural, simulate_neural
from src.models.toy import ToyUnivariateParams, build_toy, simulate_toy
from src.utils.data_loader import load_key_value_file, namespace
from src.utils.errors import SQMCError


@dataclass(frozen=True)
class ModelEntry:
    name: str
    params_cls: type
    build: Callable
    simulate: Callable
    description: str

    def params_from(self, values: Optional[Dict[str, str]] = None):
        return self.params_cls.from_mapping(namespace(values or {}, self.name))


MODELS: Dict[str, ModelEntry] = {
    'toy': ModelEntry('toy', ToyUnivariateParams, build_toy, simulate_toy,
                      "univariate non-linear growth model"),
    'msv': ModelEntry('msv', MsvParams, build_msv, simulate_msv,
                      "multivariate stochastic volatility with leverage"),
    'neural': ModelEntry('neural', NeuralDecodingParams, build_neural, simulate_neural,
                         "neural decoding with Poisson spike counts"),
    'lgss': ModelEntry('lgss', LinearGaussianParams, build_linear_gaussian, simulate_linear_gaussian,
                       "linear-Gaussian model with Kalman oracle"),
}


def get_model_entry(name: str) -> ModelEntry:
    try:
        return MODELS[name]
    except KeyError:
        raise SQMCError(f"unknown model '{name}' (choose from {', '.join(sorted(MODELS))})")


def load_params(name: str, params_file=None):
    """Parameters of model `name` from an optional key=value file (defaults otherwise)."""
    values = load_key_value_file(params_file) if params_file else {}
    return get_model_entry(name).params_from(values)


def load_model(name: str, params_file=None, observations=None):
    params = load_params(name, params_file)
    return get_model_entry(name).build(params, observations)


__all__ = ['MODELS', 'ModelEntry', 'get_model_entry', 'load_params', 'load_model', 'kalman_suite',
           'LinearGaussianParams', 'MsvParams', 'NeuralDecodingParams', 'ToyUnivariateParams']
