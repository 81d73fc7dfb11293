from .extractor import (
    ClipExtractor,
    EMBED_DIM,
    ExtractorConfig,
    MUSIC_EXTRACTOR,
    VIDEO_EXTRACTOR,
)
from .matcher import FEATURE_DIM, MAX_SEQ, MODES, MODEL_DIM, Matcher, PROJ_DIM
from .text import TEXT_DIM, text_embed
