"""StaQC to JSONL corpus converter."""

from .converter import (
    AUTO_SNIPPETS,
    AUTO_TITLES,
    MANUAL_SNIPPETS,
    MANUAL_TITLES,
    ConversionError,
    ConversionResult,
    StaqcRecord,
    convert,
    validate_corpus_file,
)

__version__ = "0.1.0"
