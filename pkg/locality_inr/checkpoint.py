"""
Checkpoint & Latent Archive Files
=================================
Both files share one self-describing binary container:

    b'LINRCKPT' | uint32 version | uint64 header length | JSON header | array payload

The JSON header holds the file kind, free-form metadata and, per array, its
name, little-endian dtype, shape and byte offset into the payload. Arrays are
written raw, so a load reproduces every value bit for bit.
"""

from __future__ import annotations

import json
import logging
import os
import struct
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from sklearn.preprocessing import StandardScaler

from locality_inr import tensor_core as tc
from locality_inr.errors import ContractError, DatasetError, FormatError
from locality_inr.inr_model import GeneralizableINR

logger = logging.getLogger(__name__)

MAGIC = b'LINRCKPT'
FORMAT_VERSION = 1
_PREFIX = struct.Struct('<8sIQ')
_DTYPES = {'float32': '<f4', 'float64': '<f8', 'int64': '<i8'}

CHECKPOINT_KIND = 'checkpoint'
ARCHIVE_KIND = 'latent_archive'


# ─────────────────────────────────────────────────────────────────────────────
# CONTAINER
# ─────────────────────────────────────────────────────────────────────────────
def write_container(path: str, kind: str, meta: dict, arrays: Dict[str, np.ndarray]) -> None:
    entries, chunks, offset = [], [], 0
    for name, array in arrays.items():
        array = np.asarray(array)
        dtype_name = array.dtype.name
        if dtype_name not in _DTYPES:
            raise ContractError(f"array {name}: unsupported dtype {dtype_name}")
        raw = np.ascontiguousarray(array, dtype=_DTYPES[dtype_name]).tobytes()
        entries.append({'name': name, 'dtype': dtype_name, 'shape': list(array.shape),
                        'offset': offset, 'nbytes': len(raw)})
        chunks.append(raw)
        offset += len(raw)
    header = json.dumps({'kind': kind, 'meta': meta, 'arrays': entries}).encode('utf-8')

    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    tmp_path = f"{path}.tmp"
    with open(tmp_path, 'wb') as f:
        f.write(_PREFIX.pack(MAGIC, FORMAT_VERSION, len(header)))
        f.write(header)
        for chunk in chunks:
            f.write(chunk)
    os.replace(tmp_path, path)


def read_container(path: str, kind: Optional[str] = None) -> Tuple[dict, Dict[str, np.ndarray]]:
    """Returns (meta, arrays); rejects foreign files, other format versions, malformed headers and truncation."""
    if not os.path.isfile(path):
        raise DatasetError(f"file not found: {path}")
    with open(path, 'rb') as f:
        blob = f.read()
    if len(blob) < _PREFIX.size:
        raise FormatError(f"{path}: truncated container")
    magic, version, header_len = _PREFIX.unpack_from(blob)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: format v{version} does not match supported v{FORMAT_VERSION}")
    body_start = _PREFIX.size + header_len
    if len(blob) < body_start:
        raise FormatError(f"{path}: truncated header")
    try:
        header = json.loads(blob[_PREFIX.size:body_start].decode('utf-8'))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError(f"{path}: unreadable header ({e})") from e
    if not isinstance(header, dict):
        raise FormatError(f"{path}: header is not a JSON object")
    if kind is not None and header.get('kind') != kind:
        raise FormatError(f"{path}: expected a {kind} file, found {header.get('kind')!r}")

    arrays: Dict[str, np.ndarray] = {}
    payload = memoryview(blob)[body_start:]
    try:
        for entry in header['arrays']:
            end = entry['offset'] + entry['nbytes']
            if end > len(payload):
                raise FormatError(f"{path}: array {entry['name']} runs past the end of the file")
            flat = np.frombuffer(payload[entry['offset']:end], dtype=_DTYPES[entry['dtype']])
            arrays[entry['name']] = flat.astype(entry['dtype']).reshape(entry['shape'])
        meta = header['meta']
    except FormatError:
        raise
    except (KeyError, TypeError, ValueError) as e:
        raise FormatError(f"{path}: malformed header ({type(e).__name__}: {e})") from e
    return meta, arrays


def _require(path: str, meta: dict, arrays: Dict[str, np.ndarray], keys: Sequence[str] = (),
             names: Sequence[str] = ()) -> None:
    if not isinstance(meta, dict):
        raise FormatError(f"{path}: metadata is not a JSON object")
    missing = [k for k in keys if k not in meta] + [n for n in names if n not in arrays]
    if missing:
        raise FormatError(f"{path}: missing {missing}")


# ─────────────────────────────────────────────────────────────────────────────
# CHECKPOINT
# ─────────────────────────────────────────────────────────────────────────────
@dataclass
class CheckpointData:
    params: Dict[str, np.ndarray]
    model_config: dict
    step: int = 0
    run_config: Optional[dict] = None
    optimizer_state: Optional[dict] = None
    rng_state: Optional[dict] = None


def save_checkpoint(path: str, model, optimizer: Optional[tc.Adam] = None,
                    rng: Optional[np.random.Generator] = None, step: int = 0,
                    run_config: Optional[dict] = None) -> None:
    arrays = {f"param/{name}": value for name, value in model.state_dict().items()}
    meta = {
        'model': model.config_dict(),
        'step': int(step),
        'run_config': run_config,
        'optimizer': None,
        'rng_state': rng.bit_generator.state if rng is not None else None,
    }
    if optimizer is not None:
        state = optimizer.state_dict()
        meta['optimizer'] = state['hyper']
        arrays.update({f"adam.m/{k}": v for k, v in state['m'].items()})
        arrays.update({f"adam.v/{k}": v for k, v in state['v'].items()})
    write_container(path, CHECKPOINT_KIND, meta, arrays)
    logger.info("checkpoint step %d -> %s", step, path)


def load_checkpoint(path: str) -> CheckpointData:
    meta, arrays = read_container(path, CHECKPOINT_KIND)
    _require(path, meta, arrays, keys=('model',))
    grouped: Dict[str, Dict[str, np.ndarray]] = {'param': {}, 'adam.m': {}, 'adam.v': {}}
    for name, array in arrays.items():
        group, _, key = name.partition('/')
        if group not in grouped:
            raise FormatError(f"{path}: unexpected array group {group!r}")
        grouped[group][key] = array
    optimizer_state = None
    if meta.get('optimizer') is not None:
        optimizer_state = {'hyper': meta['optimizer'], 'm': grouped['adam.m'], 'v': grouped['adam.v']}
    return CheckpointData(
        params=grouped['param'],
        model_config=meta['model'],
        step=int(meta.get('step', 0)),
        run_config=meta.get('run_config'),
        optimizer_state=optimizer_state,
        rng_state=meta.get('rng_state'),
    )


def restore_model(data: CheckpointData) -> GeneralizableINR:
    model = GeneralizableINR.from_config_dict(data.model_config)
    model.load_state_dict(data.params)
    return model


def load_model(path: str):
    """(model, CheckpointData) from a checkpoint file."""
    data = load_checkpoint(path)
    return restore_model(data), data


def restore_rng(state: Optional[dict], seed: int = 0) -> np.random.Generator:
    rng = np.random.default_rng(seed)
    if state is not None:
        rng.bit_generator.state = state
    return rng


# ─────────────────────────────────────────────────────────────────────────────
# LATENT ARCHIVE
# ─────────────────────────────────────────────────────────────────────────────
@dataclass
class LatentArchive:
    """
    Per-instance latent tokens with per-(token, channel) standardization
    statistics, ready to feed a generative model over latents.
    """
    latents: np.ndarray                  # (N, R, d_latent) raw encoder output
    mean: np.ndarray                     # (R, d_latent)
    std: np.ndarray                      # (R, d_latent)
    instance_ids: List[str] = field(default_factory=list)
    labels: List[str] = field(default_factory=list)

    @classmethod
    def from_latents(cls, latents: np.ndarray, instance_ids: Sequence[str],
                     labels: Optional[Sequence[Optional[str]]] = None,
                     fit_count: Optional[int] = None) -> 'LatentArchive':
        """Statistics come from the first `fit_count` instances (the training split); all by default."""
        latents = np.asarray(latents)
        if latents.ndim != 3 or latents.shape[0] == 0:
            raise DatasetError(f"latent archive needs a nonempty (N, R, d) stack, got {latents.shape}")
        n, r, d = latents.shape
        fit_rows = latents[:fit_count or n].reshape(-1, r * d).astype(np.float64)
        scaler = StandardScaler().fit(fit_rows)
        labels = [label or '' for label in (labels or [None] * n)]
        return cls(latents=latents, mean=scaler.mean_.reshape(r, d), std=scaler.scale_.reshape(r, d),
                   instance_ids=list(instance_ids), labels=labels)

    @property
    def standardized(self) -> np.ndarray:
        return self.standardize(self.latents)

    def standardize(self, latents: np.ndarray) -> np.ndarray:
        return (np.asarray(latents, dtype=np.float64) - self.mean) / self.std

    def destandardize(self, standardized: np.ndarray) -> np.ndarray:
        return np.asarray(standardized, dtype=np.float64) * self.std + self.mean

    def save(self, path: str) -> None:
        meta = {'instance_ids': self.instance_ids, 'labels': self.labels}
        arrays = {
            'latents': self.latents,
            'standardized': self.standardized,
            'mean': self.mean,
            'std': self.std,
        }
        write_container(path, ARCHIVE_KIND, meta, arrays)
        logger.info("latent archive (%d instances) -> %s", len(self.latents), path)

    @classmethod
    def load(cls, path: str) -> 'LatentArchive':
        meta, arrays = read_container(path, ARCHIVE_KIND)
        _require(path, meta, arrays, keys=('instance_ids', 'labels'), names=('latents', 'mean', 'std'))
        return cls(latents=arrays['latents'], mean=arrays['mean'], std=arrays['std'],
                   instance_ids=list(meta['instance_ids']), labels=list(meta['labels']))


__all__ = [
    'MAGIC', 'FORMAT_VERSION', 'write_container', 'read_container',
    'CheckpointData', 'save_checkpoint', 'load_checkpoint', 'restore_model', 'load_model', 'restore_rng',
    'LatentArchive',
]
