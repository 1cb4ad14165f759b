from .checkpoint import CheckpointData, CheckpointError, Entry, decode_checkpoint, encode_checkpoint, read_checkpoint, write_checkpoint
from .config import ConfigError, StageSchedule, TrainConfig
from .export import FORMATS, ascii_slices, export_shape, labels_from_parts, obj_cubes
from .latent import (
    UnsupportedOperation,
    attention_maps,
    export_attention_maps,
    interpolate,
    mix,
    random_donors,
    reconstruct,
    swap,
)
from .training import (
    LOG_COLUMNS,
    PipelineError,
    TrainState,
    evaluate,
    fluctuation,
    load_checkpoint,
    load_samples,
    new_state,
    part_names,
    predict,
    read_log,
    save_checkpoint,
    state_from_checkpoint,
    state_to_checkpoint,
    train,
)
