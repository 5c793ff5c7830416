"""
MIMO-PA Navigator: Storage Engine
CSV tables (pandas), canonical JSON, the little-endian binary container,
run manifests and the Excel report workbook.

Binary container layout:
  4 bytes  magic b'MPAN'
  1 byte   version (1)
  1 byte   kind (0 channel, 1 waveform, 2 dataset features, 3 model weights)
  1 byte   dtype (0 float64, 1 complex128 stored as interleaved re/im float64)
  1 byte   ndim
  ndim x uint32 LE dims
  payload, float64 LE, C order
"""
import hashlib
import json
import logging
import math
import os
import struct

import numpy as np
import pandas as pd
from openpyxl import Workbook
from openpyxl.styles import Alignment, Border, Font, PatternFill, Side

from engines.channel import ChannelMatrix
from engines.errors import StorageError
from engines.mlpredict import CNNArch, CNNModel, Dataset, param_shapes

log = logging.getLogger(__name__)

MAGIC = b'MPAN'
VERSION = 1
KINDS = {'channel': 0, 'waveform': 1, 'features': 2, 'model': 3}
MODEL_FORMAT = 1
FLOAT_FORMAT = '%.9g'


# ══════════════════════════════════════════════════════════════
# Tables and JSON
# ══════════════════════════════════════════════════════════════

def write_csv(df, path, header_lines=()):
    with open(path, 'w', newline='', encoding='utf-8') as f:
        for line in header_lines:
            f.write(f"# {line}\n")
        df.to_csv(f, index=False, float_format=FLOAT_FORMAT, lineterminator='\n')
    return path


def read_csv(path, **kw):
    try:
        return pd.read_csv(path, comment='#', **kw)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise StorageError(f"cannot read table {path}: {e}") from e


def _sanitize_for_json(obj):
    """numpy scalars and arrays to plain types; non-finite floats to null."""
    if isinstance(obj, dict):
        return {str(k): _sanitize_for_json(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, set)):
        items = sorted(obj) if isinstance(obj, set) else obj
        return [_sanitize_for_json(v) for v in items]
    if isinstance(obj, np.ndarray):
        return _sanitize_for_json(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj) if math.isfinite(obj) else None
    return obj


def dumps_json(obj):
    return json.dumps(_sanitize_for_json(obj), sort_keys=True, indent=2) + '\n'


def write_json(obj, path):
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        f.write(dumps_json(obj))
    return path


def read_json(path):
    try:
        with open(path, encoding='utf-8') as f:
            return json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise StorageError(f"cannot read JSON {path}: {e}") from e


def file_sha256(path):
    h = hashlib.sha256()
    with open(path, 'rb') as f:
        for block in iter(lambda: f.read(1 << 16), b''):
            h.update(block)
    return h.hexdigest()


# ══════════════════════════════════════════════════════════════
# Binary container
# ══════════════════════════════════════════════════════════════

def pack_array(array, kind):
    a = np.asarray(array)
    if kind not in KINDS:
        raise StorageError(f"unknown container kind '{kind}'")
    is_complex = np.iscomplexobj(a)
    header = MAGIC + struct.pack('<BBBB', VERSION, KINDS[kind], int(is_complex), a.ndim)
    header += struct.pack(f'<{a.ndim}I', *a.shape)
    body = np.ascontiguousarray(a, dtype='<c16' if is_complex else '<f8').view('<f8')
    return header + body.tobytes()


def unpack_array(blob, kind=None):
    if len(blob) < 8 or blob[:4] != MAGIC:
        raise StorageError("not a navigator container (bad magic)")
    version, kind_id, dtype, ndim = struct.unpack('<BBBB', blob[4:8])
    if version != VERSION:
        raise StorageError(f"unsupported container version {version}")
    if kind is not None and kind_id != KINDS[kind]:
        raise StorageError(f"container holds kind {kind_id}, expected '{kind}'")
    end = 8 + 4 * ndim
    shape = struct.unpack(f'<{ndim}I', blob[8:end])
    count = int(np.prod(shape)) * (2 if dtype == 1 else 1)
    body = np.frombuffer(blob, dtype='<f8', offset=end)
    if body.size != count:
        raise StorageError(f"container payload has {body.size} values, header says {count}")
    if dtype == 1:
        return body.view('<c16').reshape(shape).astype(complex)
    return body.reshape(shape).astype(float)


def write_container(path, array, kind):
    with open(path, 'wb') as f:
        f.write(pack_array(array, kind))
    return path


def read_container(path, kind=None):
    try:
        with open(path, 'rb') as f:
            return unpack_array(f.read(), kind)
    except OSError as e:
        raise StorageError(f"cannot read container {path}: {e}") from e


# ══════════════════════════════════════════════════════════════
# Channels
# ══════════════════════════════════════════════════════════════

def channel_frame(ch):
    n, k = np.indices(ch.H.shape)
    return pd.DataFrame({'n': n.ravel(), 'k': k.ravel(),
                         're': ch.H.real.ravel(), 'im': ch.H.imag.ravel()})


def write_channel_csv(ch, path):
    pos = ch.meta.get('position')
    header = [f"beta={ch.beta!r}", f"model={ch.meta.get('model', 'unknown')}"]
    if pos is not None:
        header.append('position=' + ','.join(f"{c:.9g}" for c in pos))
    return write_csv(channel_frame(ch), path, header)


def read_channel_csv(path):
    meta, beta = {}, None
    with open(path, encoding='utf-8') as f:
        for line in f:
            if not line.startswith('#'):
                break
            key, _, value = line[1:].strip().partition('=')
            if key == 'beta':
                beta = float(value)
            elif key == 'position':
                meta['position'] = tuple(float(v) for v in value.split(','))
            else:
                meta[key] = value
    if beta is None:
        raise StorageError(f"channel table {path} has no beta header")
    df = read_csv(path)
    H = np.zeros((int(df['n'].max()) + 1, int(df['k'].max()) + 1), dtype=complex)
    H[df['n'].to_numpy(), df['k'].to_numpy()] = df['re'].to_numpy() + 1j * df['im'].to_numpy()
    return ChannelMatrix(H, beta, meta)


# ══════════════════════════════════════════════════════════════
# Datasets
# ══════════════════════════════════════════════════════════════

def dataset_frame(ds):
    K = ds.features.shape[-1]
    flat = ds.features.reshape(len(ds), K * K)
    cols = {'ue_id': ds.ue_ids, 'gamma_db': ds.gammas_db, 'split': ds.splits, 'label_db': ds.labels}
    feat = pd.DataFrame(flat, columns=[f"f{i}" for i in range(K * K)])
    return pd.concat([pd.DataFrame(cols), feat], axis=1)


def write_dataset(ds, csv_path, bin_path=None):
    write_csv(dataset_frame(ds), csv_path)
    if bin_path:
        write_container(bin_path, ds.features, 'features')
    return csv_path


def read_dataset(csv_path):
    df = read_csv(csv_path)
    fcols = [c for c in df.columns if c.startswith('f') and c[1:].isdigit()]
    K = int(round(math.sqrt(len(fcols))))
    if K * K != len(fcols) or K == 0:
        raise StorageError(f"dataset {csv_path} has {len(fcols)} feature columns, not a square matrix")
    feats = df[sorted(fcols, key=lambda c: int(c[1:]))].to_numpy().reshape(len(df), K, K)
    return Dataset(feats, df['label_db'].to_numpy(), df['gamma_db'].to_numpy(),
                   df['ue_id'].to_numpy(), df['split'].astype(str).to_numpy())


# ══════════════════════════════════════════════════════════════
# Models
# ══════════════════════════════════════════════════════════════

def save_model(model, json_path, bin_path):
    """Architecture and shape table as JSON, weights then masks in a container."""
    chunks, table, offset = [], [], 0
    for li, p in enumerate(model.params):
        for key in ('W', 'b'):
            arr = p[key]
            table.append({'layer': li, 'param': key, 'shape': list(arr.shape),
                          'offset': offset, 'count': int(arr.size)})
            chunks.append(arr.ravel())
            offset += arr.size
    masks = [m[key].ravel().astype(float) for m in model.masks for key in ('W', 'b')]
    blob = np.concatenate(chunks + masks)
    write_container(bin_path, blob, 'model')
    write_json({'format': MODEL_FORMAT, 'arch': model.arch.to_dict(), 'table': table,
                'n_weights': int(offset), 'meta': model.meta,
                'weights_sha256': file_sha256(bin_path)}, json_path)
    return json_path, bin_path


def load_model(json_path, bin_path):
    desc = read_json(json_path)
    if desc.get('format') != MODEL_FORMAT:
        raise StorageError(f"unsupported model format {desc.get('format')}")
    arch = CNNArch.from_dict(desc['arch'])
    blob = read_container(bin_path, 'model')
    n = desc['n_weights']
    if blob.size != 2 * n:
        raise StorageError(f"model blob has {blob.size} values, expected {2 * n}")
    expected = [s for pair in param_shapes(arch) for s in pair]
    table = desc['table']
    if [tuple(t['shape']) for t in table] != expected:
        raise StorageError("model shape table does not match its architecture")
    params, masks = [], []
    for i in range(0, len(table), 2):
        layer_p, layer_m = {}, {}
        for t in table[i:i + 2]:
            sl = slice(t['offset'], t['offset'] + t['count'])
            layer_p[t['param']] = blob[sl].reshape(t['shape']).copy()
            layer_m[t['param']] = blob[n:][sl].reshape(t['shape']) > 0.5
        params.append(layer_p)
        masks.append(layer_m)
    meta = desc.get('meta') or {}
    return CNNModel(arch, params, masks, meta)


# ══════════════════════════════════════════════════════════════
# Manifests
# ══════════════════════════════════════════════════════════════

def manifest_path(out_dir, command):
    return os.path.join(out_dir, f"manifest-{command}.json")


def write_manifest(out_dir, command, config_hash, seed, outputs, metrics):
    files = {os.path.basename(p): file_sha256(p) for p in sorted(outputs)}
    manifest = {'command': command, 'config_hash': config_hash, 'seed': int(seed),
                'outputs': files, 'metrics': metrics}
    return write_json(manifest, manifest_path(out_dir, command))


def read_manifest(out_dir, command):
    path = manifest_path(out_dir, command)
    if not os.path.exists(path):
        return None
    return read_json(path)


# ══════════════════════════════════════════════════════════════
# Excel report
# ══════════════════════════════════════════════════════════════

def ws_write(ws, headers, rows):
    hf = Font(bold=True, color='FFFFFF')
    hfill = PatternFill('solid', fgColor='2E2E38')
    thin = Side(style='thin', color='CCCCCC')
    tb = Border(left=thin, right=thin, top=thin, bottom=thin)
    for c, h in enumerate(headers, 1):
        cell = ws.cell(row=1, column=c, value=h)
        cell.font = hf
        cell.fill = hfill
        cell.alignment = Alignment(horizontal='center')
        cell.border = tb
    for r, row in enumerate(rows, 2):
        for c, val in enumerate(row, 1):
            ws.cell(row=r, column=c, value=val).border = tb
    for col in ws.columns:
        ml = max(len(str(cell.value or '')) for cell in col)
        ws.column_dimensions[col[0].column_letter].width = min(ml + 2, 40)


def write_xlsx_report(tables, path):
    """One sheet per table; `tables` maps sheet name to DataFrame."""
    wb = Workbook()
    wb.remove(wb.active)
    for name, df in tables.items():
        ws = wb.create_sheet(name[:31])
        rows = [[None if isinstance(v, float) and not math.isfinite(v) else v for v in row]
                for row in df.itertuples(index=False, name=None)]
        ws_write(ws, list(df.columns), rows)
    if not tables:
        ws_write(wb.create_sheet('Empty'), ['Note'], [['no tables found']])
    wb.save(path)
    return path
