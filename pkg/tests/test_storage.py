import struct

import numpy as np
import pandas as pd
import pytest
from openpyxl import load_workbook

from engines.channel import ChannelMatrix, gen_rayleigh
from engines.errors import StorageError
from engines.mlpredict import CNNArch, Dataset, init_model, prune_magnitude
from engines.storage import (MAGIC, dumps_json, file_sha256, load_model, pack_array, read_channel_csv,
                             read_container, read_csv, read_dataset, read_manifest, save_model,
                             unpack_array, write_channel_csv, write_container, write_csv,
                             write_dataset, write_json, write_manifest, write_xlsx_report)


def test_container_header_layout():
    blob = pack_array(np.arange(6.0).reshape(2, 3), 'waveform')
    assert blob[:4] == MAGIC
    assert struct.unpack('<BBBB', blob[4:8]) == (1, 1, 0, 2)
    assert struct.unpack('<2I', blob[8:16]) == (2, 3)
    assert len(blob) == 16 + 6 * 8


def test_complex_container(tmp_path):
    H = gen_rayleigh(1.0, 12, 4, seed=1).H
    path = write_container(tmp_path / 'h.bin', H, 'channel')
    raw = path.read_bytes()
    assert raw[6] == 1
    np.testing.assert_array_equal(read_container(path, 'channel'), H)
    with pytest.raises(StorageError):
        read_container(path, 'model')


def test_container_rejects_corruption():
    blob = pack_array(np.ones(3), 'features')
    with pytest.raises(StorageError):
        unpack_array(b'XXXX' + blob[4:])
    with pytest.raises(StorageError):
        unpack_array(blob[:-8])
    with pytest.raises(StorageError):
        pack_array(np.ones(3), 'image')


def test_channel_csv_keeps_beta_and_position(tmp_path):
    ch = ChannelMatrix(gen_rayleigh(1e-7, 12, 4, seed=2).H, 1e-7, {'model': 'rayleigh', 'position': (10.0, 4.0, 1.5)})
    path = write_channel_csv(ch, tmp_path / 'ch.csv')
    first = path.read_text(encoding='utf-8').splitlines()[0]
    assert first.startswith('# beta=')
    back = read_channel_csv(path)
    assert back.beta == 1e-7
    assert back.meta['model'] == 'rayleigh'
    assert back.meta['position'] == (10.0, 4.0, 1.5)
    np.testing.assert_allclose(back.H, ch.H, rtol=1e-8)


def test_csv_comment_header_and_format(tmp_path):
    path = write_csv(pd.DataFrame({'a': [1.0 / 3], 'b': [2]}), tmp_path / 't.csv', ['run=1'])
    assert path.read_text(encoding='utf-8') == '# run=1\na,b\n0.333333333,2\n'
    assert list(read_csv(path).columns) == ['a', 'b']
    with pytest.raises(StorageError):
        read_csv(tmp_path / 'missing.csv')


def test_json_nulls_non_finite(tmp_path):
    text = dumps_json({'b': float('inf'), 'a': np.float64(1.5), 'c': np.arange(2)})
    assert text == '{\n  "a": 1.5,\n  "b": null,\n  "c": [\n    0,\n    1\n  ]\n}\n'


def test_dataset_table(tmp_path):
    ds = Dataset(np.arange(32.0).reshape(2, 4, 4), [12.0, 15.0], [0.0, 3.0], [4, 5], ['train', 'val'])
    write_dataset(ds, tmp_path / 'd.csv', tmp_path / 'd.bin')
    back = read_dataset(tmp_path / 'd.csv')
    np.testing.assert_array_equal(back.features, ds.features)
    assert list(back.splits) == ['train', 'val']
    np.testing.assert_array_equal(read_container(tmp_path / 'd.bin', 'features'), ds.features)


def test_model_save_load_keeps_masks(tmp_path):
    model = prune_magnitude(init_model(CNNArch(8, ((1, 5), (1, 5)), (6,)), seed=4), 0.4)
    model.meta['config_hash'] = 'abc'
    save_model(model, tmp_path / 'm.json', tmp_path / 'm.bin')
    back = load_model(tmp_path / 'm.json', tmp_path / 'm.bin')
    assert back.arch == model.arch
    assert back.meta['config_hash'] == 'abc'
    for p, q, m, n in zip(model.params, back.params, model.masks, back.masks):
        np.testing.assert_array_equal(p['W'], q['W'])
        np.testing.assert_array_equal(m['W'], n['W'])


def test_model_load_rejects_mismatch(tmp_path):
    model = init_model(CNNArch(4, ((1, 2), (1, 2)), (4,)), seed=0)
    save_model(model, tmp_path / 'm.json', tmp_path / 'm.bin')
    other = init_model(CNNArch(4, ((1, 3), (1, 2)), (4,)), seed=0)
    save_model(other, tmp_path / 'o.json', tmp_path / 'o.bin')
    with pytest.raises(StorageError):
        load_model(tmp_path / 'm.json', tmp_path / 'o.bin')
    desc = tmp_path / 'm.json'
    desc.write_text(desc.read_text(encoding='utf-8').replace('"format": 1', '"format": 9'), encoding='utf-8')
    with pytest.raises(StorageError):
        load_model(desc, tmp_path / 'm.bin')


def test_manifest_records_hashes(tmp_path):
    out = write_json({'x': 1}, tmp_path / 'x.json')
    write_manifest(tmp_path, 'fit-gev', 'h123', 42, [out], {'ks_p': float('nan')})
    man = read_manifest(tmp_path, 'fit-gev')
    assert man['outputs'] == {'x.json': file_sha256(out)}
    assert man['seed'] == 42 and man['metrics']['ks_p'] is None
    assert read_manifest(tmp_path, 'train') is None


def test_xlsx_report_styles_header(tmp_path):
    tables = {'scheduled_sdr': pd.DataFrame({'ue_id': [0, 1], 'sdr_db': [14.2, float('inf')]})}
    path = write_xlsx_report(tables, tmp_path / 'r.xlsx')
    ws = load_workbook(path)['scheduled_sdr']
    assert ws['A1'].value == 'ue_id'
    assert ws['A1'].font.bold
    assert ws['A1'].fill.fgColor.rgb.endswith('2E2E38')
    assert ws['B2'].value == 14.2
    assert ws['B3'].value is None
