"""Learnable planner: image encoder, depth head, BEV splat, target-query
fusion, and the autoregressive token decoder, plus training and inference.

All parameters are initialized from a named substream of the root seed
(uniform fan-in scaling, zero biases), so identical (config, seed) pairs
produce identical checkpoints. Forward passes contain no stochastic ops.
"""
from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass, field, replace

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .bev import DepthBins, GridSpec, make_target_heatmap, splat_cells
from .geometry import Pose2
from .seeds import substream
from .sensing import SurroundRig
from .tokenizer import TokenVocab, deserialize_sequence
from . import tensorio

CHECKPOINT_SCHEMA_VERSION = 1
FUSION_MODES = ("target_query", "concatenation", "element_wise")


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    channels: int = 32  # BEV feature channels C
    d_model: int = 64
    n_heads: int = 4
    n_layers: int = 2
    q_len: int = 30  # predicted trajectory length and decode cap
    fusion_mode: str = "target_query"
    fusion_downsample: int = 4
    fusion_heads: int = 0  # 0 -> same as n_heads
    mlp_ratio: int = 4
    img_height: int = 64
    img_width: int = 64
    grid: GridSpec = field(default_factory=GridSpec)
    depth_bins: DepthBins = field(default_factory=DepthBins)
    vocab: TokenVocab = field(default_factory=TokenVocab)

    def __post_init__(self):
        if self.fusion_mode not in FUSION_MODES:
            raise ValueError(f"unknown fusion mode {self.fusion_mode!r}")
        if self.d_model % self.n_heads:
            raise ValueError("d_model must be divisible by n_heads")
        if self.channels % self.heads_for_fusion:
            raise ValueError("channels must be divisible by fusion head count")
        if self.img_height % 8 or self.img_width % 8:
            raise ValueError("image sides must be divisible by the encoder stride (8)")
        if self.grid.rows % self.fusion_downsample or self.grid.cols % self.fusion_downsample:
            raise ValueError("BEV grid must divide evenly by fusion_downsample")
        if self.q_len < 1:
            raise ValueError("q_len must be at least 1")

    @property
    def heads_for_fusion(self) -> int:
        return self.fusion_heads if self.fusion_heads else self.n_heads

    @property
    def feat_h(self) -> int:
        return self.img_height // 8

    @property
    def feat_w(self) -> int:
        return self.img_width // 8

    @property
    def fused_h(self) -> int:
        return self.grid.rows // self.fusion_downsample

    @property
    def fused_w(self) -> int:
        return self.grid.cols // self.fusion_downsample

    @property
    def n_fused_cells(self) -> int:
        return self.fused_h * self.fused_w

    @property
    def max_seq(self) -> int:
        return 2 * self.q_len + 2


def _stage_channels(c: int) -> list[int]:
    return [max(c // 4, 4), max(c // 2, 4), c]


class ImageEncoder(nn.Module):
    """Three strided conv stages (stride 8 total)."""

    def __init__(self, channels: int):
        super().__init__()
        chs = _stage_channels(channels)
        layers: list[nn.Module] = []
        prev = 3
        for ch in chs:
            layers += [nn.Conv2d(prev, ch, 3, stride=2, padding=1), nn.ReLU(),
                       nn.Conv2d(ch, ch, 3, stride=1, padding=1), nn.ReLU()]
            prev = ch
        self.net = nn.Sequential(*layers)

    def forward(self, x):
        return self.net(x)


class TargetEncoder(nn.Module):
    """Strided conv stack taking the heatmap to the fused BEV resolution."""

    def __init__(self, channels: int, downsample: int):
        super().__init__()
        n_stages = int(round(math.log2(downsample)))
        if 2 ** n_stages != downsample:
            raise ValueError("fusion_downsample must be a power of two")
        chs = [max(channels // 2 ** (n_stages - 1 - i), 4) for i in range(n_stages)]
        chs[-1] = channels
        layers: list[nn.Module] = []
        prev = 1
        for ch in chs:
            layers += [nn.Conv2d(prev, ch, 3, stride=2, padding=1), nn.ReLU()]
            prev = ch
        layers += [nn.Conv2d(prev, channels, 3, stride=1, padding=1), nn.ReLU()]
        self.net = nn.Sequential(*layers)

    def forward(self, x):
        return self.net(x)


class BevNeck(nn.Module):
    """Average-pool the splat grid to the fusion resolution, then mix."""

    def __init__(self, channels: int, downsample: int):
        super().__init__()
        self.pool = nn.AvgPool2d(downsample)
        self.conv = nn.Conv2d(channels, channels, 3, padding=1)

    def forward(self, x):
        return F.relu(self.conv(self.pool(x)))


class MultiHeadAttention(nn.Module):
    """Plain scaled dot-product attention returning the weights."""

    def __init__(self, dim: int, n_heads: int):
        super().__init__()
        if dim % n_heads:
            raise ValueError("dim must divide by n_heads")
        self.n_heads = n_heads
        self.head_dim = dim // n_heads
        self.q_proj = nn.Linear(dim, dim)
        self.k_proj = nn.Linear(dim, dim)
        self.v_proj = nn.Linear(dim, dim)
        self.out_proj = nn.Linear(dim, dim)

    def forward(self, query, key, value, mask=None):
        b, lq, d = query.shape
        lk = key.shape[1]
        q = self.q_proj(query).view(b, lq, self.n_heads, self.head_dim).transpose(1, 2)
        k = self.k_proj(key).view(b, lk, self.n_heads, self.head_dim).transpose(1, 2)
        v = self.v_proj(value).view(b, lk, self.n_heads, self.head_dim).transpose(1, 2)
        scores = q @ k.transpose(-2, -1) / math.sqrt(self.head_dim)
        if mask is not None:
            scores = scores + mask
        attn = scores.softmax(dim=-1)
        out = (attn @ v).transpose(1, 2).reshape(b, lq, d)
        return self.out_proj(out), attn


class TargetQueryFusion(nn.Module):
    """Target features query camera features; both share one positional table."""

    def __init__(self, channels: int, n_heads: int):
        super().__init__()
        self.attn = MultiHeadAttention(channels, n_heads)

    def forward(self, f_cam, f_target, pos):
        b, c, h, w = f_cam.shape
        cam = f_cam.flatten(2).transpose(1, 2)
        tgt = f_target.flatten(2).transpose(1, 2)
        out, attn = self.attn(tgt + pos, cam + pos, cam)
        return out.transpose(1, 2).reshape(b, c, h, w), attn


class ConcatFusion(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.proj = nn.Conv2d(2 * channels, channels, 1)

    def forward(self, f_cam, f_target, pos):
        return self.proj(torch.cat([f_cam, f_target], dim=1)), None


class ElementwiseFusion(nn.Module):
    def forward(self, f_cam, f_target, pos):
        return f_cam + f_target, None


class DecoderLayer(nn.Module):
    def __init__(self, d_model: int, n_heads: int, mlp_ratio: int):
        super().__init__()
        self.ln1 = nn.LayerNorm(d_model)
        self.self_attn = MultiHeadAttention(d_model, n_heads)
        self.ln2 = nn.LayerNorm(d_model)
        self.cross_attn = MultiHeadAttention(d_model, n_heads)
        self.ln3 = nn.LayerNorm(d_model)
        self.mlp = nn.Sequential(
            nn.Linear(d_model, mlp_ratio * d_model), nn.ReLU(),
            nn.Linear(mlp_ratio * d_model, d_model),
        )

    def forward(self, x, memory, causal_mask):
        h = self.ln1(x)
        a, _ = self.self_attn(h, h, h, mask=causal_mask)
        x = x + a
        h = self.ln2(x)
        a, cross = self.cross_attn(h, memory, memory)
        x = x + a
        x = x + self.mlp(self.ln3(x))
        return x, cross


class TokenDecoder(nn.Module):
    """Causal transformer over the token sequence, cross-attending to BEV memory."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.embed = nn.Embedding(cfg.vocab.size, cfg.d_model)
        self.pos = nn.Parameter(torch.zeros(cfg.max_seq, cfg.d_model))
        self.layers = nn.ModuleList(
            [DecoderLayer(cfg.d_model, cfg.n_heads, cfg.mlp_ratio) for _ in range(cfg.n_layers)]
        )
        self.ln_f = nn.LayerNorm(cfg.d_model)
        self.head = nn.Linear(cfg.d_model, cfg.vocab.size)
        self.vocab_size = cfg.vocab.size

    def forward(self, tokens, memory, return_attn: bool = False):
        if int(tokens.max()) >= self.vocab_size:
            raise ValueError("token id outside the vocabulary")
        t = tokens.shape[1]
        if t > self.pos.shape[0]:
            raise ValueError(f"sequence length {t} exceeds maximum {self.pos.shape[0]}")
        x = self.embed(tokens) + self.pos[:t]
        mask = torch.full((t, t), float("-inf"), dtype=x.dtype, device=x.device).triu(1)
        cross_maps = []
        for layer in self.layers:
            x, cross = layer(x, memory, mask)
            cross_maps.append(cross)
        logits = self.head(self.ln_f(x))
        return (logits, cross_maps) if return_attn else logits


class ParkingPlanner(nn.Module):
    """End-to-end network: surround images + target heatmap -> token logits."""

    def __init__(self, cfg: ModelConfig, rig: SurroundRig):
        super().__init__()
        self.cfg = cfg
        c = cfg.channels
        self.image_encoder = ImageEncoder(c)
        self.depth_head = nn.Conv2d(c, cfg.depth_bins.count, 1)
        self.bev_neck = BevNeck(c, cfg.fusion_downsample)
        self.target_encoder = TargetEncoder(c, cfg.fusion_downsample)
        if cfg.fusion_mode == "target_query":
            self.fusion = TargetQueryFusion(c, cfg.heads_for_fusion)
        elif cfg.fusion_mode == "concatenation":
            self.fusion = ConcatFusion(c)
        else:
            self.fusion = ElementwiseFusion()
        self.bev_pos = nn.Parameter(torch.zeros(cfg.n_fused_cells, c))
        self.memory_proj = nn.Linear(c, cfg.d_model)
        self.decoder = TokenDecoder(cfg)
        cells = splat_cells(rig, cfg.depth_bins, cfg.feat_h, cfg.feat_w, cfg.grid)
        flat = torch.from_numpy(cells.reshape(-1))
        dump = cfg.grid.n_cells
        self.register_buffer("splat_index", torch.where(flat < 0, dump, flat),
                             persistent=False)
        self.n_cameras = len(rig)

    def depth_distribution(self, feats):
        return self.depth_head(feats).softmax(dim=1)

    def splat(self, feats, depth):
        """(B, R, C, h, w) features & (B, R, D, h, w) depth -> (B, C, rows, cols)."""
        b = feats.shape[0]
        c = feats.shape[2]
        grid = self.cfg.grid
        weighted = depth.unsqueeze(3) * feats.unsqueeze(2)  # (B, R, D, C, h, w)
        flat = weighted.permute(0, 1, 2, 4, 5, 3).reshape(b, -1, c)
        out = feats.new_zeros(b, grid.n_cells + 1, c)
        out.index_add_(1, self.splat_index, flat)
        return out[:, :-1].transpose(1, 2).reshape(b, c, grid.rows, grid.cols)

    def encode(self, images, heatmap, return_attn: bool = False):
        """Images (B, R, 3, H, W) + heatmap (B, 1, rows, cols) -> memory (B, M, d)."""
        b, r = images.shape[:2]
        if r != self.n_cameras:
            raise ValueError("camera count does not match the rig")
        feats = self.image_encoder(images.reshape(b * r, *images.shape[2:]))
        depth = self.depth_distribution(feats)
        c = feats.shape[1]
        f_cam_full = self.splat(
            feats.reshape(b, r, c, *feats.shape[2:]),
            depth.reshape(b, r, depth.shape[1], *depth.shape[2:]),
        )
        f_cam = self.bev_neck(f_cam_full)
        f_target = self.target_encoder(heatmap)
        fused, fuse_attn = self.fusion(f_cam, f_target, self.bev_pos)
        memory = self.memory_proj(fused.flatten(2).transpose(1, 2) + self.bev_pos)
        if return_attn:
            return memory, {"depth": depth, "fusion_attn": fuse_attn}
        return memory

    def forward(self, images, heatmap, tokens):
        return self.decoder(tokens, self.encode(images, heatmap))


def init_parameters(model: nn.Module, seed: int) -> None:
    """Uniform fan-in init for weights, zeros for biases, from a named substream."""
    rng = substream(seed, "init")

    def fill(tensor: torch.Tensor, bound: float) -> None:
        vals = rng.uniform(-bound, bound, size=tuple(tensor.shape))
        with torch.no_grad():
            tensor.copy_(torch.from_numpy(vals).to(tensor.dtype))

    for name, module in model.named_modules():
        if isinstance(module, (nn.Conv2d, nn.Linear)):
            fan_in = (
                module.in_channels * module.kernel_size[0] * module.kernel_size[1]
                if isinstance(module, nn.Conv2d)
                else module.in_features
            )
            fill(module.weight, 1.0 / math.sqrt(fan_in))
            if module.bias is not None:
                fill(module.bias, 1.0 / math.sqrt(fan_in))
        elif isinstance(module, nn.Embedding):
            fill(module.weight, 1.0 / math.sqrt(module.embedding_dim))
        elif isinstance(module, nn.LayerNorm):
            with torch.no_grad():
                module.weight.fill_(1.0)
                module.bias.zero_()
    for name, param in model.named_parameters():
        if name.endswith(("pos", "bev_pos")) and param.dim() == 2:
            fill(param, 1.0 / math.sqrt(param.shape[1]))


def build_model(cfg: ModelConfig, rig: SurroundRig, seed: int = 0) -> ParkingPlanner:
    model = ParkingPlanner(cfg, rig)
    init_parameters(model, seed)
    return model


def parameter_count(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())


def compute_loss(logits: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
    """Mean next-token cross-entropy over all supervised positions."""
    return F.cross_entropy(logits.reshape(-1, logits.shape[-1]), targets.reshape(-1))


def compute_gradients(
    model: ParkingPlanner,
    images: torch.Tensor,
    heatmap: torch.Tensor,
    tokens: torch.Tensor,
) -> "OrderedDict[str, torch.Tensor]":
    """Gradient of the mean batch loss for every parameter, by name."""
    model.zero_grad(set_to_none=True)
    logits = model(images, heatmap, tokens[:, :-1])
    loss = compute_loss(logits, tokens[:, 1:])
    if not torch.isfinite(loss):
        raise TrainingDiverged(f"non-finite loss {loss.item()}")
    loss.backward()
    grads = OrderedDict()
    for name, p in model.named_parameters():
        grads[name] = torch.zeros_like(p) if p.grad is None else p.grad.detach().clone()
    return grads


@dataclass(frozen=True)
class TrainHyperparams:
    epochs: int = 4
    batch_size: int = 16
    learning_rate: float = 1e-3
    threads: int = 1


def _batch_to_tensors(batch: dict, dtype=torch.float32):
    return (
        torch.from_numpy(batch["images"]).to(dtype),
        torch.from_numpy(batch["heatmaps"]).to(dtype),
        torch.from_numpy(batch["tokens"].astype(np.int64)),
    )


def evaluate_ce(model: ParkingPlanner, dataset, indices, batch_size: int = 32) -> float:
    """Mean token cross-entropy over the given sample indices."""
    model.eval()
    total, count = 0.0, 0
    with torch.no_grad():
        for lo in range(0, len(indices), batch_size):
            batch = dataset.collate(indices[lo:lo + batch_size])
            images, heatmaps, tokens = _batch_to_tensors(batch)
            logits = model(images, heatmaps, tokens[:, :-1])
            n = tokens.shape[0] * (tokens.shape[1] - 1)
            total += compute_loss(logits, tokens[:, 1:]).item() * n
            count += n
    return total / count


def train_model(
    model: ParkingPlanner,
    dataset,
    train_indices,
    hyper: TrainHyperparams,
    seed: int,
    holdout_indices=None,
) -> list[dict]:
    """Adam + per-step cosine decay; returns per-epoch loss history rows.

    Row 0 reports the held-out cross-entropy at initialization. Deterministic
    for a fixed (dataset, config, seed, thread count).
    """
    if len(train_indices) == 0:
        raise ValueError("training requires a nonempty dataset")
    if hyper.threads > 0:
        torch.set_num_threads(hyper.threads)
    torch.use_deterministic_algorithms(True)
    torch.manual_seed(seed & 0x7FFFFFFF)
    rng = substream(seed, "batch-order")
    steps_per_epoch = math.ceil(len(train_indices) / hyper.batch_size)
    total_steps = max(1, steps_per_epoch * hyper.epochs)
    optimizer = torch.optim.Adam(model.parameters(), lr=hyper.learning_rate)
    scheduler = torch.optim.lr_scheduler.CosineAnnealingLR(optimizer, T_max=total_steps)

    history = []
    holdout = list(holdout_indices) if holdout_indices is not None else []
    if holdout:
        history.append({"epoch": 0, "train_ce": None, "holdout_ce": evaluate_ce(model, dataset, holdout)})
    for epoch in range(1, hyper.epochs + 1):
        model.train()
        order = rng.permutation(len(train_indices))
        epoch_loss, n_batches = 0.0, 0
        for lo in range(0, len(order), hyper.batch_size):
            idxs = [train_indices[i] for i in order[lo:lo + hyper.batch_size]]
            images, heatmaps, tokens = _batch_to_tensors(dataset.collate(idxs))
            optimizer.zero_grad(set_to_none=True)
            logits = model(images, heatmaps, tokens[:, :-1])
            loss = compute_loss(logits, tokens[:, 1:])
            if not torch.isfinite(loss):
                raise TrainingDiverged(
                    f"loss became non-finite at epoch {epoch} batch {n_batches}"
                )
            loss.backward()
            optimizer.step()
            scheduler.step()
            epoch_loss += loss.item()
            n_batches += 1
        row = {"epoch": epoch, "train_ce": epoch_loss / n_batches, "holdout_ce": None}
        if holdout:
            row["holdout_ce"] = evaluate_ce(model, dataset, holdout)
        history.append(row)
    model.eval()
    return history


def infer_trajectory(
    images: np.ndarray,
    slot,
    ego: Pose2,
    model: ParkingPlanner,
    cfg: ModelConfig | None = None,
) -> tuple[np.ndarray, bool]:
    """Greedy autoregressive decode of ego-frame waypoints.

    images: (R, 3, H, W) in [0, 1]. Decoding stops at EOS or after q_len
    points; the clean flag is False only for a malformed (unpaired) tail.
    """
    cfg = cfg or model.cfg
    heatmap = make_target_heatmap(slot, ego, cfg.grid)
    vocab = cfg.vocab
    model.eval()
    with torch.no_grad():
        img_t = torch.from_numpy(np.asarray(images, dtype=np.float32)).unsqueeze(0)
        hm_t = torch.from_numpy(heatmap).to(torch.float32).unsqueeze(0)
        memory = model.encode(img_t, hm_t)
        tokens = [vocab.bos]
        saw_eos = False
        for _ in range(2 * cfg.q_len + 1):
            seq = torch.tensor(tokens, dtype=torch.int64).unsqueeze(0)
            logits = model.decoder(seq, memory)
            nxt = int(logits[0, -1].argmax())
            if nxt == vocab.eos:
                saw_eos = True
                break
            tokens.append(nxt)
            if len(tokens) - 1 >= 2 * cfg.q_len:
                break
    if not saw_eos:
        tokens.append(vocab.eos)  # cap reached: close the sequence for decoding
    points, clean = deserialize_sequence(tokens, vocab, cfg.grid.half_x, cfg.grid.half_y)
    return points, clean


# --- checkpoints ----------------------------------------------------------------


def save_checkpoint(path_prefix, model: ParkingPlanner, config_echo: dict, seed: int) -> None:
    """Named float32 tensors + JSON manifest; bit-exact round trip."""
    tensors = OrderedDict(
        (name, param.detach().cpu().numpy().astype("<f4", copy=False))
        for name, param in model.state_dict().items()
    )
    meta = {
        "schema_version": CHECKPOINT_SCHEMA_VERSION,
        "config": config_echo,
        "seed": seed,
        "total_params": parameter_count(model),
    }
    tensorio.save_tensors(path_prefix, tensors, meta)


def load_checkpoint_tensors(path_prefix) -> tuple[dict[str, np.ndarray], dict]:
    tensors, meta = tensorio.load_tensors(path_prefix)
    if meta.get("schema_version") != CHECKPOINT_SCHEMA_VERSION:
        raise ValueError(f"unsupported checkpoint schema {meta.get('schema_version')}")
    return tensors, meta


def load_parameters(model: ParkingPlanner, tensors: dict[str, np.ndarray]) -> None:
    state = OrderedDict(
        (name, torch.from_numpy(np.ascontiguousarray(arr))) for name, arr in tensors.items()
    )
    model.load_state_dict(state)
