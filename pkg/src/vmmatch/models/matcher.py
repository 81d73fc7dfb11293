"""Cross-modal matching model over clip-level feature sequences.

Per modality: adapter 512->768, learned positional embedding, transformer
encoder, masked mean-pool to the sequence embedding xi (768). Across
modalities: multi-head cross-attention on the pooled embeddings, additive
fusion and MLP projection to theta (256), a decoder MLP (256->768) with one
parameter set shared across video/music/tag branches, per-modality
reconstructors (256->768), and a 2-way matching classifier over the
concatenated projections.

Modes select how clip features enter the encoder: full sequences (SE),
sequences with pooled rhythm/flow plug-in embeddings fused into xi (SE&R),
mean-pooled features as a length-1 sequence (A-SE), or an externally
supplied track-level embedding (AE).
"""

from __future__ import annotations

import numpy as np

from ..nn import (
    LayerNorm,
    Linear,
    MLP,
    Module,
    MultiHeadAttention,
    Tensor,
    concat,
)
from ..nn.layers import TransformerEncoder
from ..quantize import BinSpec, QuantEmbedTables

MODES = ("AE", "A-SE", "SE", "SE&R")
FEATURE_DIM = 512
MODEL_DIM = 768
PROJ_DIM = 256
MAX_SEQ = 7


def _masked_mean(x: Tensor, mask: np.ndarray) -> Tensor:
    """(B, T, D) -> (B, D) averaging only unmasked positions."""
    m = np.asarray(mask, dtype=np.float64)
    weights = m / m.sum(axis=1, keepdims=True)
    return (x * Tensor(weights[..., None])).sum(axis=1)


class Matcher(Module):
    def __init__(self, binspec: BinSpec, rng: np.random.Generator,
                 encoder_layers: int = 1, heads: int = 4,
                 ff_hidden: int = 1536, max_seq: int = MAX_SEQ):
        self.max_seq = max_seq
        self.v_adapter = Linear(FEATURE_DIM, MODEL_DIM, rng)
        self.m_adapter = Linear(FEATURE_DIM, MODEL_DIM, rng)
        self.v_pos = Tensor(rng.uniform(-0.05, 0.05, (max_seq, MODEL_DIM)),
                            requires_grad=True)
        self.m_pos = Tensor(rng.uniform(-0.05, 0.05, (max_seq, MODEL_DIM)),
                            requires_grad=True)
        self.v_encoder = TransformerEncoder(MODEL_DIM, heads, ff_hidden,
                                            encoder_layers, rng)
        self.m_encoder = TransformerEncoder(MODEL_DIM, heads, ff_hidden,
                                            encoder_layers, rng)
        self.cross_v = MultiHeadAttention(MODEL_DIM, heads, rng)
        self.cross_m = MultiHeadAttention(MODEL_DIM, heads, rng)
        self.v_proj = MLP(MODEL_DIM, 512, PROJ_DIM, rng)
        self.m_proj = MLP(MODEL_DIM, 512, PROJ_DIM, rng)
        self.t_proj = MLP(MODEL_DIM, 512, PROJ_DIM, rng)
        self.decoder = MLP(PROJ_DIM, 512, MODEL_DIM, rng)   # shared across branches
        self.recon_v = MLP(PROJ_DIM, 512, MODEL_DIM, rng)
        self.recon_m = MLP(PROJ_DIM, 512, MODEL_DIM, rng)
        self.classifier = MLP(2 * PROJ_DIM, 256, 2, rng)
        self.quant = QuantEmbedTables(binspec, rng)
        self.v_plug = Linear(FEATURE_DIM, MODEL_DIM, rng)
        self.m_plug = Linear(FEATURE_DIM, MODEL_DIM, rng)
        # normalized so the plug-in enters at the same scale as the
        # LayerNormed encoder output it is added to
        self.v_plug_norm = LayerNorm(MODEL_DIM)
        self.m_plug_norm = LayerNorm(MODEL_DIM)

    # -- sequence encoding ---------------------------------------------------

    def encode_sequence(self, feats: np.ndarray, mask: np.ndarray,
                        modality: str, mode: str,
                        rhythm_bins: np.ndarray | None = None,
                        flow_bins: np.ndarray | None = None,
                        track_embedding: np.ndarray | None = None) -> Tensor:
        """(B, T, 512) features + (B, T) validity mask -> xi (B, 768)."""
        if mode not in MODES:
            raise ValueError(f"unknown mode {mode!r}")
        if modality not in ("video", "music"):
            raise ValueError(f"unknown modality {modality!r}")
        mask = np.asarray(mask, dtype=bool)
        if feats.shape[1] > self.max_seq:
            raise ValueError(f"sequence length {feats.shape[1]} exceeds {self.max_seq}")
        x = feats if isinstance(feats, Tensor) else Tensor(feats)

        if mode == "AE":
            if track_embedding is None:
                raise ValueError("AE mode requires an external track embedding")
            x = Tensor(np.asarray(track_embedding)[:, None, :])
            mask = np.ones(x.shape[:2], dtype=bool)
        elif mode == "A-SE":
            x = _masked_mean(x, mask).reshape(x.shape[0], 1, FEATURE_DIM)
            mask = np.ones((x.shape[0], 1), dtype=bool)
        plug = None
        if mode == "SE&R":
            # fused at the pooled-embedding level: one linear layer between
            # the lookup tables and the ranking distance keeps the plug-in
            # channel fast to train
            if modality == "music":
                if rhythm_bins is None:
                    raise ValueError("SE&R music encoding requires rhythm bins")
                emb = self.quant.rhythm_embedding(rhythm_bins)
                plug = self.m_plug_norm(self.m_plug(_masked_mean(emb, mask)))
            else:
                if flow_bins is None:
                    raise ValueError("SE&R video encoding requires flow bins")
                emb = self.quant.flow_embedding(flow_bins)
                plug = self.v_plug_norm(self.v_plug(_masked_mean(emb, mask)))

        adapter = self.v_adapter if modality == "video" else self.m_adapter
        pos = self.v_pos if modality == "video" else self.m_pos
        t = x.shape[1]
        h = adapter(x) + pos[:t]
        encoder = self.v_encoder if modality == "video" else self.m_encoder
        xi = _masked_mean(encoder(h, mask), mask)
        return xi if plug is None else xi + plug

    # -- pooled-embedding heads ------------------------------------------------

    def cross_attention(self, xi_v: Tensor, xi_m: Tensor) -> tuple[Tensor, Tensor]:
        b = xi_v.shape[0]
        qv = xi_v.reshape(b, 1, MODEL_DIM)
        qm = xi_m.reshape(b, 1, MODEL_DIM)
        att_v = self.cross_v(qv, qm).reshape(b, MODEL_DIM)
        att_m = self.cross_m(qm, qv).reshape(b, MODEL_DIM)
        return att_v, att_m

    def project(self, xi: Tensor, att: Tensor, modality: str) -> Tensor:
        proj = {"video": self.v_proj, "music": self.m_proj,
                "tag": self.t_proj}[modality]
        return proj(xi + att)

    def decode(self, theta: Tensor) -> Tensor:
        return self.decoder(theta)

    def reconstruct(self, theta: Tensor, modality: str) -> Tensor:
        recon = self.recon_v if modality == "video" else self.recon_m
        return recon(theta)

    def match_logits(self, theta_v: Tensor, theta_m: Tensor) -> Tensor:
        return self.classifier(concat([theta_v, theta_m], axis=-1))

    def pair_heads(self, xi_v: Tensor, xi_m: Tensor,
                   xi_tag: np.ndarray | None = None) -> dict[str, Tensor]:
        """All matched-pair branch outputs from pooled sequence embeddings.

        The primary projections theta_v/theta_m take a zero attention input
        so that the distances shaped in training are exactly the distances
        ranked at retrieval time. The cross-attention refinements
        theta_v_att/theta_m_att feed the match classifier, which is what
        trains the attention blocks.
        """
        att_v, att_m = self.cross_attention(xi_v, xi_m)
        zero_v = Tensor(np.zeros(xi_v.shape))
        zero_m = Tensor(np.zeros(xi_m.shape))
        out = {"xi_v": xi_v, "xi_m": xi_m}
        out["theta_v"] = self.project(xi_v, zero_v, "video")
        out["theta_m"] = self.project(xi_m, zero_m, "music")
        out["theta_v_att"] = self.project(xi_v, att_v, "video")
        out["theta_m_att"] = self.project(xi_m, att_m, "music")
        out["phi_v"] = self.decode(out["theta_v"])
        out["phi_m"] = self.decode(out["theta_m"])
        out["xi_rec_v"] = self.reconstruct(out["theta_v"], "video")
        out["xi_rec_m"] = self.reconstruct(out["theta_m"], "music")
        if xi_tag is not None:
            xt = Tensor(xi_tag)
            zero = Tensor(np.zeros_like(xi_tag))
            out["xi_tag"] = xt
            out["theta_tag"] = self.project(xt, zero, "tag")
            out["phi_tag"] = self.decode(out["theta_tag"])
        return out
