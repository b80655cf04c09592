"""Self-describing, checksummed checkpoint files.

Layout::

    DYSIGN-CHECKPOINT\n
    version=1 sha256=<hex digest of payload> bytes=<payload length>\n
    <payload: uncompressed .npz archive>

The archive holds every parameter and optimizer array under a prefixed
name plus a ``__meta__`` entry with the JSON-encoded configuration, neuron
constants, array shapes, random stream states, masks and metrics log.
Arrays are stored raw, so a save/load round trip is bit-exact.
"""

from __future__ import annotations

import hashlib
import io
import json
from pathlib import Path

import numpy as np

from . import rng as rngmod
from .errors import CheckpointError
from .model import ModelParams
from .neuron import NeuronConfig

MAGIC = b"DYSIGN-CHECKPOINT\n"
VERSION = 1


def save_checkpoint(path, run):
    from .training import TrainConfig  # noqa: F401  (documents the expected run type)

    arrays = {f"param/{k}": v for k, v in run.params.arrays().items()}
    opt_scalars, opt_arrays = run.optimizer.state_dict()
    arrays.update({f"opt/{k}": v for k, v in opt_arrays.items()})
    arrays.update({f"mask/{k}": np.asarray(v) for k, v in run.masks.items()})
    meta = {
        "version": VERSION,
        "config": run.config.to_dict(),
        "neuron": run.params.neuron.__dict__,
        "shapes": {k: list(v.shape) for k, v in arrays.items()},
        "optimizer": {"kind": run.optimizer.kind, "lr": run.optimizer.lr, **opt_scalars},
        "rng_states": run.rng_states,
        "graph_shape": run.graph_shape,
        "epoch": run.epoch,
        "metrics": run.metrics,
    }
    arrays["__meta__"] = np.frombuffer(json.dumps(meta).encode("utf-8"), dtype=np.uint8)
    buf = io.BytesIO()
    np.savez(buf, **arrays)
    payload = buf.getvalue()
    digest = hashlib.sha256(payload).hexdigest()
    header = f"version={VERSION} sha256={digest} bytes={len(payload)}\n".encode("ascii")
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(MAGIC + header + payload)
    tmp.replace(path)
    return path


def _read(path):
    try:
        blob = Path(path).read_bytes()
    except FileNotFoundError:
        raise CheckpointError(f"checkpoint not found: {path}") from None
    if not blob.startswith(MAGIC):
        raise CheckpointError(f"{path}: not a checkpoint file (bad magic, checksum cannot be verified)")
    rest = blob[len(MAGIC) :]
    nl = rest.find(b"\n")
    try:
        fields = dict(item.split("=", 1) for item in rest[:nl].decode("ascii").split())
        version, digest, size = int(fields["version"]), fields["sha256"], int(fields["bytes"])
    except (UnicodeDecodeError, ValueError, KeyError):
        raise CheckpointError(f"{path}: corrupted checkpoint header (checksum cannot be verified)") from None
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    payload = rest[nl + 1 :]
    if len(payload) != size or hashlib.sha256(payload).hexdigest() != digest:
        raise CheckpointError(f"{path}: checksum mismatch, checkpoint is corrupted")
    with np.load(io.BytesIO(payload), allow_pickle=False) as z:
        arrays = {k: z[k] for k in z.files}
    meta = json.loads(arrays.pop("__meta__").tobytes().decode("utf-8"))
    return meta, arrays


def load_checkpoint(path):
    """Rebuild the :class:`TrainRun` stored at ``path``."""
    from .training import TrainConfig, TrainRun, make_optimizer

    meta, arrays = _read(path)
    neuron = NeuronConfig(**meta["neuron"])
    params = ModelParams.from_arrays({k[6:]: v for k, v in arrays.items() if k.startswith("param/")}, neuron)
    opt_meta = dict(meta["optimizer"])
    optimizer = make_optimizer(opt_meta.pop("kind"), opt_meta.pop("lr"))
    optimizer.load_state(opt_meta, {k[4:]: v for k, v in arrays.items() if k.startswith("opt/")})
    return TrainRun(
        config=TrainConfig.from_dict(meta["config"]),
        params=params,
        optimizer=optimizer,
        rngs={k: rngmod.from_state(v) for k, v in meta["rng_states"].items()},
        metrics=meta["metrics"],
        masks={k[5:]: v for k, v in arrays.items() if k.startswith("mask/")},
        graph_shape=meta["graph_shape"],
        epoch=meta["epoch"],
    )
