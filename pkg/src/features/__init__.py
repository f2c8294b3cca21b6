from src.errors import ConfigError
from .base import FeatureBag, FeatureExtractor, bag_records
from .builtin import FEATURE_DIM, BuiltinExtractor, extract_bag_features, extract_segment_features
from .external import ExternalFeatureImporter, import_external_features
from .scaling import SCALER_FILE, FeatureScaler

# Registry of feature sources
# Key is the CLI name, value is the extractor class
EXTRACTORS = {
    "builtin": BuiltinExtractor,
    "import": ExternalFeatureImporter,
}


def get_extractor(name: str, **kwargs) -> FeatureExtractor:
    """Get a feature extractor instance by name."""
    if name not in EXTRACTORS:
        raise ConfigError(f"Unknown extractor: {name}. Available: {list(EXTRACTORS.keys())}")
    return EXTRACTORS[name](**kwargs)


__all__ = [
    "FeatureBag",
    "FeatureExtractor",
    "BuiltinExtractor",
    "ExternalFeatureImporter",
    "FeatureScaler",
    "FEATURE_DIM",
    "EXTRACTORS",
    "SCALER_FILE",
    "bag_records",
    "extract_bag_features",
    "extract_segment_features",
    "get_extractor",
    "import_external_features",
]
