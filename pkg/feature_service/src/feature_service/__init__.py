from .encoders import ClipEncoder, Encoder, TinyEncoder, load_encoder
from .errors import DecodeError, EncoderError, FeatureServiceError
from .export import ExportJob, ExportResult, export_features, write_vcf1
from .service import build_app

__version__ = "0.1.0"

__all__ = [
    "ClipEncoder",
    "DecodeError",
    "Encoder",
    "EncoderError",
    "ExportJob",
    "ExportResult",
    "FeatureServiceError",
    "TinyEncoder",
    "build_app",
    "export_features",
    "load_encoder",
    "write_vcf1",
    "__version__",
]
