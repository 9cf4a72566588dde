# registry.py
"""Map a model config block to its StateSpaceModel"""

from typing import Annotated, Union

from pydantic import Field, TypeAdapter

from ssm.exceptions import InvalidArgumentError

from .lingauss import LinearGaussianModel, LinGaussConfig
from .sir import SirConfig, SirModel
from .source import SourceConfig, SourceModel

ModelConfig = Annotated[Union[SirConfig, SourceConfig, LinGaussConfig], Field(discriminator='kind')]

MODELS = {
    'sir': SirModel,
    'source': SourceModel,
    'lingauss': LinearGaussianModel,
}

_adapter = TypeAdapter(ModelConfig)


def parse_model_config(data: dict):
    """Validate a raw `{kind: ..., ...}` mapping into the matching config class"""
    return _adapter.validate_python(data)


def build_model(config):
    """Instantiate the model for a config object, a raw mapping or a bare kind name"""
    if isinstance(config, str):
        if config not in MODELS:
            raise InvalidArgumentError(f"Unknown model '{config}', expected one of {sorted(MODELS)}")
        return MODELS[config]()
    if isinstance(config, dict):
        config = parse_model_config(config)
    return MODELS[config.kind](config)
