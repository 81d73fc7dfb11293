from .beats import (
    BEAT_TIME_OFFSET,
    HOP_SECONDS,
    RhythmStats,
    estimate_period,
    onset_envelope,
    rhythm_stats,
    track_beats,
)
from .features import (
    CLIP_SAMPLES,
    CLIP_SECONDS,
    FRAME_SIZE,
    MAX_CLIPS,
    MUSIC_CLIP_SHAPE,
    MusicClip,
    SAMPLE_RATE,
    VIDEO_CLIP_SHAPE,
    VideoClip,
    chop_pair,
    fbank,
    hz_to_mel,
    mel_filterbank,
    mel_to_hz,
    pcm_to_float,
    preprocess_video_frames,
    stft_log_mel,
)
from .flow import KERNEL_IMPL, FlowStat, frame_pair_displacements, optical_flow_stat
