"""Sequential risk scorer: three 1-D conv layers into two stacked LSTM
layers, ending in a sigmoid risk head.

Scores a chronological sequence of projected feature vectors and returns
a violation risk in (0, 1). The architecture (3 conv + 2 LSTM) is fixed;
widths, kernels and training hyperparameters are configurable. The final
LSTM hidden state feeds the head. Inference has a tape-free vectorized
path so batch scoring stays cheap inside the serving pipeline.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import nn
from .domain import GroundTruth


class SequenceTooShort(Exception):
    pass


class DegenerateLabels(Exception):
    pass


@dataclass
class SeqModelConfig:
    input_dim: int = 8
    conv_channels: tuple[int, int, int] = (16, 16, 32)
    kernel_widths: tuple[int, int, int] = (5, 3, 3)
    lstm_hidden: tuple[int, int] = (32, 32)
    learning_rate: float = 1e-3
    epochs: int = 40
    batch_size: int = 32
    seed: int = 7

    def __post_init__(self):
        if len(self.conv_channels) != 3 or len(self.kernel_widths) != 3:
            raise ValueError("architecture is fixed at exactly 3 conv layers")
        if len(self.lstm_hidden) != 2:
            raise ValueError("architecture is fixed at exactly 2 LSTM layers")

    @property
    def min_seq_len(self) -> int:
        # at least 3 steps must survive the valid convolutions
        return sum(w - 1 for w in self.kernel_widths) + 3


@dataclass
class SequenceSample:
    sequence: np.ndarray  # T x k, chronological
    label: GroundTruth


class SequenceModel:
    def __init__(self, config: SeqModelConfig):
        self.config = config
        rng = nn.SplitMix64(config.seed)
        chans = [config.input_dim, *config.conv_channels]
        self.conv_kernels = []
        for i, kw in enumerate(config.kernel_widths):
            fan_in = kw * chans[i]
            self.conv_kernels.append(nn.parameter(
                nn.xavier_uniform((kw, chans[i], chans[i + 1]), fan_in, chans[i + 1], rng),
                name=f"conv{i + 1}",
            ))
        sizes = [config.conv_channels[-1], *config.lstm_hidden]
        self.lstm_cells = [
            nn.LstmCellParams(sizes[i], sizes[i + 1], rng, prefix=f"lstm{i + 1}")
            for i in range(2)
        ]
        h_last = config.lstm_hidden[-1]
        self.head_w = nn.parameter(
            nn.xavier_uniform((h_last, 1), h_last, 1, rng), name="head.w")
        self.head_b = nn.parameter(np.zeros(1), name="head.b")

    def parameters(self) -> list[nn.Tensor]:
        out = list(self.conv_kernels)
        for cell in self.lstm_cells:
            out.extend(cell.tensors())
        out.extend([self.head_w, self.head_b])
        return out

    def named_arrays(self) -> dict[str, np.ndarray]:
        return {p.name: p.data for p in self.parameters()}

    # ------------------------------------------------------------------
    # Tape forward (training)
    # ------------------------------------------------------------------

    def logits_tape(self, batch: np.ndarray) -> nn.Tensor:
        """batch: [B, T, k] -> logits tensor [B, 1]."""
        self._check_length(batch.shape[-2])
        x = nn.Tensor(batch)
        for kernel in self.conv_kernels:
            x = nn.relu(nn.conv1d(x, kernel))
        batch_size, t_len, _ = x.data.shape
        h_c = []
        for cell in self.lstm_cells:
            zeros = nn.Tensor(np.zeros((batch_size, cell.hidden_size)))
            h_c.append((zeros, zeros))
        for t in range(t_len):
            inp = nn.select_time(x, t)
            for li, cell in enumerate(self.lstm_cells):
                h, c = nn.lstm_step(cell, inp, h_c[li][0], h_c[li][1])
                h_c[li] = (h, c)
                inp = h
        return h_c[-1][0] @ self.head_w + self.head_b

    # ------------------------------------------------------------------
    # Tape-free forward (inference)
    # ------------------------------------------------------------------

    def batch_scores(self, batch: np.ndarray) -> np.ndarray:
        """Vectorized risk scores for [B, T, k]; returns [B] floats in (0, 1)."""
        batch = np.asarray(batch, dtype=np.float64)
        self._check_length(batch.shape[-2])
        x = batch
        for kernel in self.conv_kernels:
            kw, c_in, c_out = kernel.data.shape
            length = x.shape[1]
            out_len = length - kw + 1
            idx = np.arange(out_len)[:, None] + np.arange(kw)[None, :]
            flat = x[:, idx, :].reshape(x.shape[0], out_len, kw * c_in)
            x = np.maximum(flat @ kernel.data.reshape(kw * c_in, c_out), 0.0)
        b = x.shape[0]
        states = [(np.zeros((b, c.hidden_size)), np.zeros((b, c.hidden_size)))
                  for c in self.lstm_cells]
        for t in range(x.shape[1]):
            inp = x[:, t, :]
            for li, cell in enumerate(self.lstm_cells):
                h_prev, c_prev = states[li]
                gi = nn._sigmoid_raw(inp @ cell.W["i"].data + h_prev @ cell.U["i"].data + cell.b["i"].data)
                gf = nn._sigmoid_raw(inp @ cell.W["f"].data + h_prev @ cell.U["f"].data + cell.b["f"].data)
                gg = np.tanh(inp @ cell.W["g"].data + h_prev @ cell.U["g"].data + cell.b["g"].data)
                go = nn._sigmoid_raw(inp @ cell.W["o"].data + h_prev @ cell.U["o"].data + cell.b["o"].data)
                c_new = gf * c_prev + gi * gg
                h_new = go * np.tanh(c_new)
                states[li] = (h_new, c_new)
                inp = h_new
        logits = states[-1][0] @ self.head_w.data + self.head_b.data
        return nn._sigmoid_raw(logits[:, 0])

    def risk_score(self, sequence: np.ndarray) -> float:
        """Risk in (0, 1) for one T x k sequence."""
        sequence = np.asarray(sequence, dtype=np.float64)
        if sequence.ndim != 2:
            raise SequenceTooShort(f"expected a T x k matrix, got shape {sequence.shape}")
        return float(self.batch_scores(sequence[None, :, :])[0])

    def _check_length(self, t_len: int) -> None:
        if t_len < self.config.min_seq_len:
            raise SequenceTooShort(
                f"sequence length {t_len} < minimum {self.config.min_seq_len} "
                f"for kernels {self.config.kernel_widths}")

    # ------------------------------------------------------------------
    # Persistence
    # ------------------------------------------------------------------

    def save(self, path_base: str) -> None:
        import json
        nn.save_checkpoint(path_base, self.named_arrays())
        with open(path_base + ".config.json", "w", encoding="utf-8") as f:
            json.dump({
                "input_dim": self.config.input_dim,
                "conv_channels": list(self.config.conv_channels),
                "kernel_widths": list(self.config.kernel_widths),
                "lstm_hidden": list(self.config.lstm_hidden),
                "learning_rate": self.config.learning_rate,
                "epochs": self.config.epochs,
                "batch_size": self.config.batch_size,
                "seed": self.config.seed,
            }, f)

    @classmethod
    def load(cls, path_base: str) -> "SequenceModel":
        import json
        with open(path_base + ".config.json", "r", encoding="utf-8") as f:
            raw = json.load(f)
        config = SeqModelConfig(
            input_dim=raw["input_dim"],
            conv_channels=tuple(raw["conv_channels"]),
            kernel_widths=tuple(raw["kernel_widths"]),
            lstm_hidden=tuple(raw["lstm_hidden"]),
            learning_rate=raw["learning_rate"],
            epochs=raw["epochs"],
            batch_size=raw["batch_size"],
            seed=raw["seed"],
        )
        model = cls(config)
        arrays = nn.load_checkpoint(path_base)
        for p in model.parameters():
            p.data[...] = arrays[p.name]
        return model


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    valid_accuracy: list[float] = field(default_factory=list)


def _to_arrays(samples: list[SequenceSample]) -> tuple[np.ndarray, np.ndarray]:
    x = np.stack([np.asarray(s.sequence, dtype=np.float64) for s in samples])
    y = np.asarray([1.0 if s.label is GroundTruth.VIOLATION else 0.0 for s in samples])
    return x, y


def accuracy_at_half(scores: np.ndarray, y_true: np.ndarray) -> float:
    """(TP + TN) / N with the class threshold fixed at 0.5."""
    predicted = (scores >= 0.5).astype(np.float64)
    return float(np.mean(predicted == y_true))


def train_sequence_model(
    config: SeqModelConfig,
    train: list[SequenceSample],
    valid: list[SequenceSample],
) -> tuple[SequenceModel, TrainHistory]:
    """Mini-batch binary cross-entropy training; threshold-0.5 validation accuracy."""
    if not train or not valid:
        raise ValueError("both splits must be non-empty")
    x_train, y_train = _to_arrays(train)
    if len(set(y_train.tolist())) < 2:
        raise DegenerateLabels("training labels contain a single class")
    x_valid, y_valid = _to_arrays(valid)

    model = SequenceModel(config)
    params = model.parameters()
    opt = nn.Adam(params, lr=config.learning_rate)
    order_rng = np.random.default_rng(config.seed)
    history = TrainHistory()
    n = x_train.shape[0]
    for _ in range(config.epochs):
        perm = order_rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, config.batch_size):
            idx = perm[start:start + config.batch_size]
            nn.zero_grads(params)
            logits = model.logits_tape(x_train[idx])
            loss = nn.sigmoid_binary_cross_entropy(logits, y_train[idx][:, None])
            nn.backward(loss)
            opt.step()
            epoch_loss += float(loss.data) * len(idx)
        history.train_loss.append(epoch_loss / n)
        history.valid_accuracy.append(
            accuracy_at_half(model.batch_scores(x_valid), y_valid))
    return model, history
