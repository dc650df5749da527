"""Tactile contact simulation, contrastive tactile-language-image alignment,
zero-shot contact-state evaluation, and closed-loop grasp refinement."""

from .contact import (
    ContactPose,
    approach_axis,
    pose_for_depth,
    sample_contact_pose_large,
    sample_contact_pose_small,
)
from .embedding import (
    AttributeCodebook,
    EmbeddingStore,
    build_codebook,
    embed_image_synthetic,
    embed_text_synthetic,
    load_embedding_store,
    save_embedding_store,
)
from .encoder import (
    EncoderParams,
    encode,
    encode_batch,
    gradient_check,
    init_params,
    load_checkpoint,
    normalize_cloud,
    save_checkpoint,
)
from .errors import (
    DataError,
    DescriptionParseError,
    FormatError,
    InvalidClassError,
    NoContactError,
    OutOfRangeError,
    TacalignError,
    UnsupportedShapeError,
)
from .grasp import (
    ACTIONS,
    SUCCESS_DESCRIPTORS,
    GraspEnv,
    GraspEnvState,
    RefinementTrace,
    detect_success,
    extract_action,
    reason_rule_based,
    run_refinement,
)
from .labeling import (
    Categories,
    ContactState,
    bucket_area,
    bucket_depth,
    bucket_position,
    compute_contact_state,
    generate_description,
    generate_prompt,
    parse_description,
)
from .sensor import (
    SensorSpec,
    compute_displacement_field,
    render_depth_image,
    sample_point_cloud,
)
from .shapes import SHAPE_KINDS, TEXTURE_KINDS, Primitive, sdf_eval, support
from .training import (
    TrainConfig,
    TripletDataset,
    augment_cloud,
    contrastive_loss,
    total_loss,
    train,
)

__version__ = "0.1.0"
