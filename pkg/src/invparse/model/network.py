"""Small pre-norm encoder-decoder transformer with tied embeddings."""

from __future__ import annotations

import math

import torch
from torch import Tensor, nn


def sinusoidal_positions(length: int, dim: int) -> Tensor:
    pos = torch.arange(length, dtype=torch.float64).unsqueeze(1)
    freq = torch.exp(torch.arange(0, dim, 2, dtype=torch.float64) * (-math.log(10000.0) / dim))
    table = torch.zeros(length, dim, dtype=torch.float64)
    table[:, 0::2] = torch.sin(pos * freq)
    table[:, 1::2] = torch.cos(pos * freq[: dim // 2])
    return table


class Seq2SeqTransformer(nn.Module):
    """Encoder-decoder over one vocabulary.

    The token embedding matrix is shared by the encoder input, the decoder
    input and the output projection, so copying an input word means
    reproducing its own embedding at the decoder output.

    With ``copy=True`` the output is a gated mixture of that softmax and an
    attention distribution over source positions, each position voting for
    the token id given in ``copy_ids``.
    """

    def __init__(self, vocab_size: int, model_dim: int = 64, heads: int = 4, ffn_dim: int = 128,
                 layers: int = 2, dropout: float = 0.1, max_len: int = 512, copy: bool = False):
        super().__init__()
        self.model_dim = model_dim
        self.embedding = nn.Embedding(vocab_size, model_dim)
        self.output_bias = nn.Parameter(torch.zeros(vocab_size))
        self.register_buffer("positions", sinusoidal_positions(max_len, model_dim).float(), persistent=False)
        self.dropout = nn.Dropout(dropout)

        enc_layer = nn.TransformerEncoderLayer(model_dim, heads, ffn_dim, dropout, activation="gelu",
                                               batch_first=True, norm_first=True)
        dec_layer = nn.TransformerDecoderLayer(model_dim, heads, ffn_dim, dropout, activation="gelu",
                                               batch_first=True, norm_first=True)
        self.encoder = nn.TransformerEncoder(enc_layer, layers, norm=nn.LayerNorm(model_dim),
                                             enable_nested_tensor=False)
        self.decoder = nn.TransformerDecoder(dec_layer, layers, norm=nn.LayerNorm(model_dim))
        nn.init.normal_(self.embedding.weight, std=model_dim ** -0.5)
        self.copy_query = nn.Linear(model_dim, model_dim) if copy else None
        self.copy_gate = nn.Linear(model_dim, 1) if copy else None

    @property
    def vocab_size(self) -> int:
        return self.embedding.num_embeddings

    def _embed(self, ids: Tensor, segments: Tensor | None = None) -> Tensor:
        x = self.embedding(ids)
        if segments is not None:
            # (batch, length, slots) of token ids; 0 marks an empty slot
            present = segments.ne(0).unsqueeze(-1).to(x.dtype)
            extra = (self.embedding(segments) * present).sum(2) / present.sum(2).clamp_min(1.0)
            x = x + extra
        x = x * math.sqrt(self.model_dim) + self.positions[: ids.size(1)].to(x.dtype)
        return self.dropout(x)

    def encode(self, src: Tensor, src_pad: Tensor, segments: Tensor | None = None) -> Tensor:
        """``segments`` has shape (batch, length, slots): per position, token
        ids whose mean embedding is added to the input (0 adds nothing)."""
        return self.encoder(self._embed(src, segments), src_key_padding_mask=src_pad)

    def decode(self, memory: Tensor, src_pad: Tensor, tgt_in: Tensor, tgt_pad: Tensor | None = None,
               copy_ids: Tensor | None = None) -> Tensor:
        """Log-probabilities over the vocabulary, shape (batch, steps, vocab)."""
        length = tgt_in.size(1)
        causal = torch.triu(torch.ones(length, length, dtype=torch.bool, device=tgt_in.device), diagonal=1)
        h = self.decoder(self._embed(tgt_in), memory, tgt_mask=causal,
                         tgt_key_padding_mask=tgt_pad, memory_key_padding_mask=src_pad)
        gen = torch.log_softmax(h @ self.embedding.weight.t() + self.output_bias, dim=-1)
        if self.copy_query is None or copy_ids is None:
            return gen
        scores = self.copy_query(h) @ memory.transpose(1, 2) / math.sqrt(self.model_dim)
        blocked = (src_pad | copy_ids.eq(0)).unsqueeze(1)
        scores = scores.masked_fill(blocked, float("-inf"))
        # a source without copyable positions gives NaN rows; they carry no mass
        attn = torch.nan_to_num(torch.softmax(scores, dim=-1))
        copied = gen.new_zeros(gen.shape).scatter_add(-1, copy_ids.unsqueeze(1).expand_as(attn), attn)
        gate = self.copy_gate(h)
        tiny = torch.finfo(gen.dtype).tiny
        return torch.logaddexp(nn.functional.logsigmoid(gate) + gen,
                               nn.functional.logsigmoid(-gate) + copied.clamp_min(tiny).log())

    def forward(self, src: Tensor, src_pad: Tensor, tgt_in: Tensor, tgt_pad: Tensor | None = None,
                segments: Tensor | None = None, copy_ids: Tensor | None = None) -> Tensor:
        return self.decode(self.encode(src, src_pad, segments), src_pad, tgt_in, tgt_pad, copy_ids)

    @torch.no_grad()
    def add_rows(self, n: int, generator: torch.Generator | None = None) -> None:
        """Grow the vocabulary by ``n`` randomly initialized rows."""
        if n <= 0:
            return
        old = self.embedding.weight
        fresh = torch.randn(n, self.model_dim, generator=generator, dtype=old.dtype) * self.model_dim ** -0.5
        emb = nn.Embedding(old.size(0) + n, self.model_dim, dtype=old.dtype)
        emb.weight.copy_(torch.cat([old, fresh.to(old.device)], dim=0))
        self.embedding = emb
        self.output_bias = nn.Parameter(torch.cat([self.output_bias, self.output_bias.new_zeros(n)]))

    @torch.no_grad()
    def force_uniform_output(self) -> None:
        """Make every output distribution uniform: zero the final decoder norm
        and output bias, and shut the copy gate."""
        self.decoder.norm.weight.zero_()
        self.decoder.norm.bias.zero_()
        self.output_bias.zero_()
        if self.copy_gate is not None:
            self.copy_gate.weight.zero_()
            self.copy_gate.bias.fill_(80.0)
