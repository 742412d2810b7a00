"""Transformer text encoder producing one global embedding per expression.

The architecture mirrors the CLIP text tower (pre-LN residual attention
blocks, causal mask, QuickGELU) so published checkpoints can be loaded with
a mechanical key rename; the desk-scale config only shrinks width/depth.

The embedding is read at the EOS position and linearly projected, so any
padding after EOS can never influence the output: under a causal mask the
EOS position attends only to itself and earlier tokens.
"""

from __future__ import annotations

import torch
import torch.nn as nn

from .tokenizers import TextQuery


class QuickGELU(nn.Module):
    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x * torch.sigmoid(1.702 * x)


class ResidualAttentionBlock(nn.Module):
    def __init__(self, width: int, heads: int):
        super().__init__()
        self.attn = nn.MultiheadAttention(width, heads, batch_first=True)
        self.ln_1 = nn.LayerNorm(width)
        self.mlp = nn.Sequential()
        self.mlp.add_module("c_fc", nn.Linear(width, width * 4))
        self.mlp.add_module("gelu", QuickGELU())
        self.mlp.add_module("c_proj", nn.Linear(width * 4, width))
        self.ln_2 = nn.LayerNorm(width)

    def forward(self, x: torch.Tensor, attn_mask: torch.Tensor) -> torch.Tensor:
        y = self.ln_1(x)
        y, _ = self.attn(y, y, y, need_weights=False, attn_mask=attn_mask)
        x = x + y
        x = x + self.mlp(self.ln_2(x))
        return x


class TextTransformer(nn.Module):
    """Causal transformer over token ids; output is the projected EOS state."""

    def __init__(
        self,
        vocab_size: int,
        width: int,
        layers: int,
        heads: int,
        embed_dim: int,
        max_len: int,
        eos_id: int,
    ):
        super().__init__()
        self.eos_id = eos_id
        self.max_len = max_len
        self.token_embedding = nn.Embedding(vocab_size, width)
        self.positional_embedding = nn.Parameter(torch.empty(max_len, width))
        self.resblocks = nn.ModuleList(ResidualAttentionBlock(width, heads) for _ in range(layers))
        self.ln_final = nn.LayerNorm(width)
        self.text_projection = nn.Parameter(torch.empty(width, embed_dim))

        nn.init.normal_(self.token_embedding.weight, std=0.02)
        nn.init.normal_(self.positional_embedding, std=0.01)
        nn.init.normal_(self.text_projection, std=width**-0.5)

    def forward(self, token_ids: torch.Tensor) -> torch.Tensor:
        """token_ids: (B, L) int64 -> (B, embed_dim) global embeddings."""
        if token_ids.dim() != 2:
            raise ValueError(f"expected (B, L) token ids, got {tuple(token_ids.shape)}")
        B, L = token_ids.shape
        if L > self.max_len:
            raise ValueError(f"sequence length {L} exceeds max_len {self.max_len}")
        is_eos = token_ids == self.eos_id
        if not bool(is_eos.any(dim=1).all()):
            raise ValueError("every sequence must contain the EOS token")
        # first EOS per row: argmax over the boolean mask
        eos_pos = is_eos.int().argmax(dim=1)

        x = self.token_embedding(token_ids) + self.positional_embedding[:L]
        mask = torch.full((L, L), float("-inf"), device=x.device, dtype=x.dtype).triu(1)
        for block in self.resblocks:
            x = block(x, mask)
        x = self.ln_final(x)
        x = x[torch.arange(B, device=x.device), eos_pos]
        return x @ self.text_projection

    @torch.no_grad()
    def encode_query(self, query: TextQuery) -> torch.Tensor:
        """Single-query convenience wrapper; returns a (embed_dim,) vector."""
        ids = torch.tensor([query.token_ids], dtype=torch.long)
        return self.forward(ids)[0]


# Rename map from CLIP text-tower checkpoint keys to TextTransformer keys.
# The positional embedding is sliced to max_len rows on load.
CLIP_TEXT_KEY_RULES = [
    ("transformer.resblocks.", "resblocks."),
    ("token_embedding.weight", "token_embedding.weight"),
    ("positional_embedding", "positional_embedding"),
    ("ln_final.", "ln_final."),
    ("text_projection", "text_projection"),
]


def map_clip_text_keys(state_dict: dict) -> dict:
    """Translate a CLIP checkpoint's text-tower entries to our names."""
    out = {}
    for key, value in state_dict.items():
        for src, dst in CLIP_TEXT_KEY_RULES:
            if key.startswith(src):
                out[dst + key[len(src):]] = value
                break
    return out


def load_clip_text_weights(model: TextTransformer, state_dict: dict) -> None:
    mapped = map_clip_text_keys(state_dict)
    if "positional_embedding" in mapped:
        mapped["positional_embedding"] = mapped["positional_embedding"][: model.max_len]
    missing, unexpected = model.load_state_dict(mapped, strict=False)
    missing = [k for k in missing]
    if missing:
        raise ValueError(f"checkpoint is missing text parameters: {missing[:5]}")
    if unexpected:
        raise ValueError(f"unmapped text parameters: {unexpected[:5]}")
