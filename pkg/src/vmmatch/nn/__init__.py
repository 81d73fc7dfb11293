from .tensor import (
    no_grad,
    Tensor,
    concat,
    embedding,
    layer_norm,
    log_softmax,
    softmax,
    unfold_time,
    where_mask,
)
from .layers import (
    Adam,
    Conv1d,
    DepthwiseConv1d,
    EmbeddingTable,
    FeedForward,
    LayerNorm,
    Linear,
    MLP,
    Module,
    MultiHeadAttention,
    TransformerEncoder,
    TransformerEncoderLayer,
)
