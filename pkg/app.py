"""
MIMO-PA Navigator: Command-Line Entry Point
Chains the engines per subcommand and writes plot-ready CSV, JSON, binary
containers and a per-command manifest into the output directory.

Every command computes all of its results before it creates a single file,
so a failing run leaves no partial outputs behind.
"""
import argparse
import glob
import logging
import os
import sys
import traceback

import numpy as np
import pandas as pd

from engines import allocation, mlpredict, statmodel, storage
from engines.data_loader import (build_allocation, build_arch, build_pa, build_scenario,
                                 build_setup, build_train_config, config_hash, load_config)
from engines.errors import EXIT_OK, ConfigError, NavigatorError, StorageError, exit_code_for
from engines.runtime import derive_seed, parallel_map, rng_for
from engines.rxmetrics import (from_db, sdr_theory_correlated, sdr_theory_uncorrelated,
                               sdr_theory_victim, sndr_and_rate, to_db)
from engines.simulation import simulate_link, ue_channel
from engines.txchain import pa_curve

log = logging.getLogger('mpan')

LOG_FORMAT = '%(levelname)s %(name)s: %(message)s'


# ══════════════════════════════════════════════════════════════
#  HELPERS
# ══════════════════════════════════════════════════════════════

def _out_dir(cfg):
    out = cfg['experiment']['output_dir']
    os.makedirs(out, exist_ok=True)
    return out


def _out(cfg, name):
    return os.path.join(cfg['experiment']['output_dir'], name)


def _finish(cfg, command, outputs, metrics):
    out = cfg['experiment']['output_dir']
    storage.write_manifest(out, command, config_hash(cfg), cfg['experiment']['seed'], outputs, metrics)
    log.info(f"[{command.upper()}] wrote {len(outputs)} files to {out}")
    return EXIT_OK


def _db_tag(g_db):
    return f"{g_db:g}dB"


def _grid_index(cfg, ue):
    n_y = cfg['scenario']['n_y']
    return ue // n_y, ue % n_y


def _require_file(path, what):
    if not os.path.exists(path):
        raise StorageError(f"{what} not found: {path}")
    return path


def _model_paths(path):
    stem = path[:-5] if path.endswith('.json') else path
    return stem + '.json', stem + '.bin'


def _load_model(path):
    json_path, bin_path = _model_paths(path)
    _require_file(json_path, 'model description')
    _require_file(bin_path, 'model weights')
    return storage.load_model(json_path, bin_path)


# ══════════════════════════════════════════════════════════════
#  SIMULATE-SDR
# ══════════════════════════════════════════════════════════════

def _scheduled_ue(task):
    """Scheduled-UE rows of one position across the IBO list."""
    setup, scenario, ue, model_name, seed, gammas_db, sigma = task
    try:
        ch = ue_channel(setup, scenario, ue, model_name, derive_seed(seed, 'channel', ue))
    except NavigatorError as e:
        log.warning(f"[SDR] UE {ue}: channel failed ({e}), skipped")
        return []
    sym_seed = derive_seed(seed, 'symbols', ue)
    x, y, z = scenario.positions[ue]
    rows = []
    for g_db in gammas_db:
        try:
            link = simulate_link(ch, setup.pa, setup.ofdm, 10 ** (g_db / 10), setup.n_symbols, sym_seed)
        except NavigatorError as e:
            log.warning(f"[SDR] UE {ue} IBO {g_db} dB: {e}, skipped")
            continue
        sndr, rate = sndr_and_rate(link.S, link.D, sigma, setup.ofdm.bandwidth)
        rows.append({
            'ue_id': ue, 'x': x, 'y': y, 'z': z, 'gamma_db': g_db,
            'gamma_avg_db': float(to_db(link.gamma_avg)), 'sdr_db': link.sdr_db,
            'sdr_theory_corr_db': float(to_db(sdr_theory_correlated(link.gamma_avg, setup.pa))),
            'sdr_theory_unc_db': float(to_db(sdr_theory_uncorrelated(link.gamma_avg, ch.K, setup.pa))),
            'ibo_min_db': link.ibo_min_db, 'ibo_max_db': link.ibo_max_db,
            'inband_fraction': link.inband_fraction, 's_rx': link.S, 'd_rx': link.D,
            'sndr_db': float(to_db(sndr)), 'rate_bps': rate,
        })
    return rows


def _victim_rows(cfg, setup, scenario, channels, sched, gammas_db):
    seed = cfg['experiment']['seed']
    victims = [u for u in sorted(channels) if u != sched]
    rows = []
    for g_db in gammas_db:
        link = simulate_link(channels[sched], setup.pa, setup.ofdm, 10 ** (g_db / 10),
                             setup.n_symbols, derive_seed(seed, 'symbols', sched),
                             victims=[channels[v] for v in victims])
        theory = sdr_theory_victim(link.gamma_avg, setup.pa)
        for v, sdr, S, D in zip(victims, link.victim_sdr, link.victim_S, link.victim_D):
            x, y, z = scenario.positions[v]
            rows.append({'ue_id': v, 'x': x, 'y': y, 'z': z, 'scheduled_ue': sched,
                         'gamma_db': g_db, 'gamma_avg_db': float(to_db(link.gamma_avg)),
                         'sdr_db': float(to_db(sdr)), 'sdr_theory_victim_db': float(to_db(theory)),
                         'sdr_ratio': float(sdr / theory), 's_rx': S, 'd_rx': D})
    return rows


def cmd_simulate_sdr(args, cfg):
    seed, threads = cfg['experiment']['seed'], cfg['experiment']['threads']
    setup, scenario = build_setup(cfg), build_scenario(cfg)
    model_name = cfg['channel']['model']
    gammas_db = tuple(float(g) for g in cfg['sdr']['ibo_db'])
    sched = cfg['sdr']['scheduled_ue']
    sigma = build_allocation(cfg, predictor='theory_rayleigh').sigma_interf

    tasks = [(setup, scenario, ue, model_name, seed, gammas_db, sigma) for ue in range(len(scenario))]
    scheduled = pd.DataFrame([r for chunk in parallel_map(_scheduled_ue, tasks, threads) for r in chunk])
    if scheduled.empty:
        raise NavigatorError("no UE produced a scheduled-SDR record")

    channels = {}
    for ue in range(len(scenario)):
        try:
            channels[ue] = ue_channel(setup, scenario, ue, model_name, derive_seed(seed, 'channel', ue))
        except NavigatorError:
            continue
    if sched not in channels:
        raise NavigatorError(f"scheduled UE {sched} has no usable channel")
    victim = pd.DataFrame(_victim_rows(cfg, setup, scenario, channels, sched, gammas_db)
                          if cfg['sdr']['victims'] else [])

    maps = {}
    for g_db in gammas_db:
        rows = []
        sch = scheduled[scheduled['gamma_db'] == g_db].set_index('ue_id')['sdr_db']
        vic = victim[victim['gamma_db'] == g_db].set_index('ue_id')['sdr_db'] if not victim.empty else {}
        for ue in range(len(scenario)):
            ix, iy = _grid_index(cfg, ue)
            x, y, _ = scenario.positions[ue]
            rows.append({'ix': ix, 'iy': iy, 'x': x, 'y': y,
                         'scheduled_sdr_db': sch.get(ue, np.nan), 'victim_sdr_db': vic.get(ue, np.nan)})
        maps[g_db] = pd.DataFrame(rows)

    curve = pa_curve(setup.pa)
    _out_dir(cfg)
    outputs = [storage.write_csv(scheduled, _out(cfg, 'scheduled_sdr.csv'))]
    if not victim.empty:
        outputs.append(storage.write_csv(victim, _out(cfg, 'victim_sdr.csv')))
    for g_db, df in maps.items():
        outputs.append(storage.write_csv(df, _out(cfg, f"sdr_map_{_db_tag(g_db)}.csv")))
    outputs.append(storage.write_csv(pd.DataFrame(curve), _out(cfg, 'pa_curve.csv')))
    outputs.append(storage.write_channel_csv(channels[sched], _out(cfg, f"channel_ue{sched}.csv")))
    outputs.append(storage.write_container(_out(cfg, f"channel_ue{sched}.bin"), channels[sched].H, 'channel'))

    metrics = {'n_ues': len(scenario), 'n_records': len(scheduled),
               'mean_scheduled_sdr_db': {_db_tag(g): float(scheduled[scheduled['gamma_db'] == g]['sdr_db']
                                                           .replace(np.inf, np.nan).mean())
                                         for g in gammas_db}}
    if not victim.empty:
        metrics['median_victim_ratio'] = float(victim['sdr_ratio'].replace(np.inf, np.nan).median())
    return _finish(cfg, 'simulate-sdr', outputs, metrics)


# ══════════════════════════════════════════════════════════════
#  FIT-GEV / AUTOCORR
# ══════════════════════════════════════════════════════════════

def cmd_fit_gev(args, cfg):
    table_path = _require_file(args.table or _out(cfg, 'victim_sdr.csv'), 'victim SDR table')
    df = storage.read_csv(table_path)
    if 'sdr_db' not in df.columns:
        raise StorageError(f"{table_path} has no sdr_db column")
    pa = build_pa(cfg)
    if args.gamma_db is not None:
        gamma_db = np.full(len(df), float(args.gamma_db))
    else:
        col = 'gamma_avg_db' if 'gamma_avg_db' in df.columns else 'gamma_db'
        if col not in df.columns:
            raise StorageError(f"{table_path} has no IBO column, pass --gamma-db")
        gamma_db = df[col].to_numpy(dtype=float)
    theory = {g: sdr_theory_victim(from_db(g), pa) for g in np.unique(gamma_db)}
    ratio = from_db(df['sdr_db'].to_numpy(dtype=float)) / np.array([theory[g] for g in gamma_db])
    finite = np.isfinite(ratio)
    if not finite.all():
        log.warning(f"[GEV] dropping {int((~finite).sum())} non-finite SDR ratios")
    ratio = ratio[finite]

    g = cfg['gev']
    order = rng_for(cfg['experiment']['seed'], 'gev-holdout').permutation(ratio.size)
    n_hold = int(round(g['holdout_fraction'] * ratio.size))
    fit_part, hold_part = ratio[order[n_hold:]], ratio[order[:n_hold]]
    params = statmodel.gev_fit_mle(fit_part)
    ks = statmodel.ks_test(hold_part, statmodel.params_cdf(params), g['downsample_stride'])
    record = statmodel.gev_record(params, ks)
    record.update({'n_fit': int(fit_part.size), 'n_holdout': int(hold_part.size),
                   'downsample_stride': g['downsample_stride'], 'table': os.path.basename(table_path),
                   'theory_gamma_db': None if args.gamma_db is None else float(args.gamma_db),
                   'pa_kind': pa.kind})

    xs = np.sort(hold_part)
    cdf = pd.DataFrame({'ratio': xs, 'empirical_cdf': np.arange(1, xs.size + 1) / xs.size,
                        'gev_cdf': statmodel.gev_cdf(xs, params.mu, params.sigma, params.xi)})
    _out_dir(cfg)
    outputs = [storage.write_json(record, _out(cfg, 'gev_fit.json')),
               storage.write_csv(cdf, _out(cfg, 'gev_cdf.csv'))]
    return _finish(cfg, 'fit-gev', outputs, {'mu': params.mu, 'sigma': params.sigma, 'xi': params.xi,
                                             'ks_p': ks[1]})


def _map_from_table(path, column, resolution):
    df = storage.read_csv(_require_file(path, 'SDR map'))
    for col in ('ix', 'iy', column):
        if col not in df.columns:
            raise StorageError(f"{path} has no {col} column")
    grid = df.pivot(index='ix', columns='iy', values=column).sort_index().sort_index(axis=1)
    return statmodel.SDRMap(grid.to_numpy(dtype=float), resolution)


def cmd_autocorr(args, cfg):
    a = cfg['autocorr']
    if args.table:
        sdr_map = _map_from_table(args.table, args.column, cfg['scenario']['resolution'])
        source = os.path.basename(args.table)
    else:
        sdr_map = statmodel.synthesize_sdr_map((a['size'], a['size']), a['resolution'], a['corr_length'],
                                               a['mean_db'], a['std_db'],
                                               derive_seed(cfg['experiment']['seed'], 'autocorr-map'))
        source = 'synthetic'
    acf = statmodel.spatial_autocorrelation(sdr_map, a['max_lag'] or None)
    dec = statmodel.decorrelation_distance(acf, sdr_map.resolution)
    table = pd.DataFrame({'lag': acf.lags, 'lag_m': acf.lags * sdr_map.resolution,
                          'acf': acf.acf, 'n_pairs': acf.n_pairs})
    result = {'source': source, 'resolution_m': sdr_map.resolution, 'distance_m': dec.distance_m,
              'decorrelated': dec.decorrelated, 'below_resolution': dec.below_resolution}
    _out_dir(cfg)
    outputs = [storage.write_csv(table, _out(cfg, 'autocorr.csv')),
               storage.write_json(result, _out(cfg, 'decorrelation.json'))]
    return _finish(cfg, 'autocorr', outputs, result)


# ══════════════════════════════════════════════════════════════
#  DATASET / TRAIN / EVAL / PRUNE
# ══════════════════════════════════════════════════════════════

def cmd_dataset(args, cfg):
    seed, threads = cfg['experiment']['seed'], cfg['experiment']['threads']
    setup, scenario = build_setup(cfg), build_scenario(cfg)
    d = cfg['dataset']
    model_name = cfg['channel']['model']
    train_set = mlpredict.build_dataset(scenario, d['train_ibo_db'], model_name, seed, setup,
                                        threads, val_fraction=d['val_fraction'])
    test_set = mlpredict.build_dataset(scenario, d['test_ibo_db'], model_name, seed, setup,
                                       threads, split='test')
    _out_dir(cfg)
    outputs = [storage.write_dataset(train_set, _out(cfg, 'dataset_train.csv')),
               storage.write_container(_out(cfg, 'dataset_train.bin'), train_set.features, 'features'),
               storage.write_dataset(test_set, _out(cfg, 'dataset_test.csv')),
               storage.write_container(_out(cfg, 'dataset_test.bin'), test_set.features, 'features')]
    metrics = {'n_train': int((train_set.splits == 'train').sum()),
               'n_val': int((train_set.splits == 'val').sum()), 'n_test': len(test_set),
               'label_mean_db': float(train_set.labels.mean())}
    return _finish(cfg, 'dataset', outputs, metrics)


def _read_dataset(path, arch):
    ds = storage.read_dataset(_require_file(path, 'dataset'))
    if ds.features.shape[-1] != arch.input_size:
        raise ConfigError(f"dataset features are {ds.features.shape[-1]}x{ds.features.shape[-1]}, "
                          f"the array has K={arch.input_size}", 'array')
    return ds


def cmd_train(args, cfg):
    arch = build_arch(cfg)
    ds = _read_dataset(args.dataset or _out(cfg, 'dataset_train.csv'), arch)
    tcfg = build_train_config(cfg)
    h = config_hash(cfg)
    model = None
    if args.resume:
        model = _load_model(args.resume)
        if model.meta.get('config_hash') != h:
            raise ConfigError(f"refusing to resume: model was trained under config "
                              f"{model.meta.get('config_hash')}, current config is {h}")
        log.info(f"[TRAIN] resuming after epoch {model.meta.get('epochs', 0)}")
    model = mlpredict.train(ds, arch, tcfg, model)
    model.meta['config_hash'] = h
    curve = pd.DataFrame({'epoch': np.arange(1, len(model.meta['train_loss']) + 1),
                          'train_mape_pct': 100 * np.asarray(model.meta['train_loss']),
                          'val_mape_pct': 100 * np.asarray(model.meta['val_loss'])})
    _out_dir(cfg)
    outputs = list(storage.save_model(model, _out(cfg, 'model.json'), _out(cfg, 'model.bin')))
    outputs.append(storage.write_csv(curve, _out(cfg, 'training_curve.csv')))
    metrics = {'epochs': model.meta['epochs'], 'n_params': model.n_params,
               'train_mape_pct': float(curve['train_mape_pct'].iloc[-1]) if len(curve) else None,
               'val_mape_pct': float(curve['val_mape_pct'].iloc[-1]) if len(curve) else None}
    return _finish(cfg, 'train', outputs, metrics)


def _eval_rows(model, testset, label):
    mape, rmse, mae = mlpredict.evaluate(model, testset)
    rep = mlpredict.parameter_report(model)
    rows = [{'model': label, 'ibo_db': 'all', 'n': len(testset), 'mape_pct': 100 * mape,
             'rmse_db': rmse, 'mae_db': mae, 'sparsity': model.meta.get('sparsity', 0.0),
             'nonzero_fraction': rep['fraction']}]
    for g in np.unique(testset.gammas_db):
        keep = testset.gammas_db == g
        part = mlpredict.Dataset(testset.features[keep], testset.labels[keep], testset.gammas_db[keep],
                                 testset.ue_ids[keep], testset.splits[keep])
        m, r, a = mlpredict.evaluate(model, part)
        rows.append({'model': label, 'ibo_db': f"{g:g}", 'n': len(part), 'mape_pct': 100 * m,
                     'rmse_db': r, 'mae_db': a, 'sparsity': model.meta.get('sparsity', 0.0),
                     'nonzero_fraction': rep['fraction']})
    return rows


def cmd_eval(args, cfg):
    model_path = args.model or _out(cfg, 'model.json')
    model = _load_model(model_path)
    testset = _read_dataset(args.dataset or _out(cfg, 'dataset_test.csv'), model.arch)
    rows = _eval_rows(model, testset, os.path.basename(_model_paths(model_path)[0]))
    _out_dir(cfg)
    outputs = [storage.write_csv(pd.DataFrame(rows), _out(cfg, 'eval.csv'))]
    return _finish(cfg, 'eval', outputs, {'mape_pct': rows[0]['mape_pct'], 'rmse_db': rows[0]['rmse_db'],
                                          'mae_db': rows[0]['mae_db']})


def cmd_prune(args, cfg):
    p = cfg['prune']
    sparsity = p['sparsity'] if args.sparsity is None else args.sparsity
    model = _load_model(args.model or _out(cfg, 'model.json'))
    testset = _read_dataset(args.dataset or _out(cfg, 'dataset_test.csv'), model.arch)
    base_mape = mlpredict.evaluate(model, testset)[0]
    pruned = mlpredict.prune_magnitude(model, sparsity)
    if p['fine_tune_epochs'] > 0:
        trainset = _read_dataset(args.train_dataset or _out(cfg, 'dataset_train.csv'), model.arch)
        pruned = mlpredict.fine_tune(pruned, trainset, build_train_config(cfg, p['fine_tune_epochs']))
    mape, rmse, mae = mlpredict.evaluate(pruned, testset)
    rep = mlpredict.parameter_report(pruned)
    row = {'sparsity': sparsity, 'total': rep['total'], 'nonzero': rep['nonzero'],
           'nonzero_fraction': rep['fraction'], 'macs': rep['macs'], 'macs_nonzero': rep['macs_nonzero'],
           'fine_tune_epochs': p['fine_tune_epochs'],
           'mape_base_pct': 100 * base_mape, 'mape_pct': 100 * mape,
           'degradation_pp': 100 * (mape - base_mape), 'rmse_db': rmse, 'mae_db': mae}
    _out_dir(cfg)
    outputs = list(storage.save_model(pruned, _out(cfg, 'model_pruned.json'), _out(cfg, 'model_pruned.bin')))
    outputs.append(storage.write_csv(pd.DataFrame([row]), _out(cfg, 'prune.csv')))
    outputs.append(storage.write_csv(pd.DataFrame(rep['layers']), _out(cfg, 'prune_layers.csv')))
    return _finish(cfg, 'prune', outputs, row)


# ══════════════════════════════════════════════════════════════
#  ALLOCATE
# ══════════════════════════════════════════════════════════════

def _allocate_ue(task):
    setup, scenario, ue, model_name, seed, acfg, baseline_db = task
    ch = ue_channel(setup, scenario, ue, model_name, derive_seed(seed, 'channel', ue))
    sym_seed = derive_seed(seed, 'symbols', ue)
    chosen = allocation.allocate_ibo(ch, acfg, sym_seed)
    base = allocation.fixed_ibo_baseline(ch, baseline_db, acfg.sigma_interf, acfg, sym_seed)
    return ue, chosen, base


def cmd_allocate(args, cfg):
    seed, threads = cfg['experiment']['seed'], cfg['experiment']['threads']
    a = cfg['allocation']
    predictor = 'oracle_simulation' if args.oracle else (args.predictor or a['predictor'])
    model = None
    if predictor == 'cnn_model':
        model_path = args.model or _out(cfg, 'model.json')
        if not os.path.exists(_model_paths(model_path)[0]):
            raise ConfigError("cnn_model predictor needs a trained model (--model) or --oracle",
                              'allocation.predictor')
        model = _load_model(model_path)
    acfg = build_allocation(cfg, model, predictor, args.sigma_interf_dbm)
    setup, scenario = build_setup(cfg), build_scenario(cfg)
    n_ues = a['n_ues'] or len(scenario)
    if n_ues > len(scenario):
        raise ConfigError(f"n_ues {n_ues} exceeds the {len(scenario)} grid positions", 'allocation.n_ues')
    baseline_db = a['baseline_ibo_db']
    tasks = [(setup, scenario, ue, cfg['channel']['model'], seed, acfg, baseline_db) for ue in range(n_ues)]
    results = parallel_map(_allocate_ue, tasks, threads)

    chosen = {ue: r for ue, r, _ in results}
    base = {ue: b for ue, _, b in results}
    report = allocation.rate_ratio_report(chosen, base)
    rows = []
    for ue, ratio in zip(report['ue_ids'], report['ratios']):
        r, b = chosen[ue], base[ue]
        x, y, z = scenario.positions[ue]
        rows.append({'ue_id': ue, 'x': x, 'y': y, 'z': z, 'chosen_ibo_db': r.chosen_ibo_db,
                     'predicted_sdr_db': r.chosen['sdr_db'], 'predicted_sndr_db': float(to_db(r.chosen['sndr'])),
                     'achieved_sndr_db': float(to_db(r.achieved_sndr)), 'rate_bps': r.achieved_rate,
                     'baseline_ibo_db': baseline_db, 'baseline_sndr_db': float(to_db(b.achieved_sndr)),
                     'baseline_rate_bps': b.achieved_rate, 'rate_ratio': ratio})
    hist = allocation.ibo_histogram([chosen[u] for u in report['ue_ids']], acfg.ibo_candidates_db)
    summary = {'predictor': predictor, 'sigma_interf_w': acfg.sigma_interf,
               'baseline_ibo_db': baseline_db, 'n_ues': n_ues,
               'median_ratio': report['median'], 'p90_ratio': report['p90'], 'min_ratio': report['min'],
               'share_below_one': report['share_below_one'],
               'ibo_share': {f"{z:g}": s for z, s in hist.items()}}
    _out_dir(cfg)
    outputs = [storage.write_csv(pd.DataFrame(rows), _out(cfg, 'allocation.csv')),
               storage.write_csv(pd.DataFrame({'rate_ratio': report['cdf_ratio'], 'cdf': report['cdf_prob']}),
                                 _out(cfg, 'rate_ratio_cdf.csv')),
               storage.write_csv(pd.DataFrame({'ibo_db': list(hist), 'share': list(hist.values())}),
                                 _out(cfg, 'ibo_histogram.csv')),
               storage.write_json(summary, _out(cfg, 'allocation_summary.json'))]
    return _finish(cfg, 'allocate', outputs, summary)


# ══════════════════════════════════════════════════════════════
#  REPORT
# ══════════════════════════════════════════════════════════════

def cmd_report(args, cfg):
    out = cfg['experiment']['output_dir']
    name = args.name
    if not name or name in ('.', '..') or os.path.basename(name) != name or '/' in name or '\\' in name:
        raise ConfigError(f"report name must be a plain file name, got '{name}'", 'report.name')
    paths = sorted(glob.glob(os.path.join(out, '*.csv')))
    if not paths:
        raise StorageError(f"no CSV tables in {out}")
    tables = {os.path.splitext(os.path.basename(p))[0]: storage.read_csv(p) for p in paths}
    path = storage.write_xlsx_report(tables, os.path.join(out, name))
    log.info(f"[REPORT] {len(tables)} sheets -> {path}")
    return _finish(cfg, 'report', [path], {'sheets': sorted(tables)})


COMMANDS = {
    'simulate-sdr': cmd_simulate_sdr, 'fit-gev': cmd_fit_gev, 'autocorr': cmd_autocorr,
    'dataset': cmd_dataset, 'train': cmd_train, 'eval': cmd_eval, 'prune': cmd_prune,
    'allocate': cmd_allocate, 'report': cmd_report,
}


# ══════════════════════════════════════════════════════════════
#  CLI
# ══════════════════════════════════════════════════════════════

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', help='experiment TOML (env MPAN_CONFIG)')
    common.add_argument('--seed', type=int, help='root seed, unsigned 64-bit (env MPAN_SEED)')
    common.add_argument('--threads', type=int, help='worker processes (env MPAN_THREADS)')
    common.add_argument('--out', help='output directory (env MPAN_OUT)')
    common.add_argument('-v', '--verbose', action='store_true', help='log at INFO level')

    parser = argparse.ArgumentParser(prog='mpan', description='Massive-MIMO PA distortion toolkit')
    sub = parser.add_subparsers(dest='command', required=True)
    sub.add_parser('simulate-sdr', parents=[common], help='scheduled and victim SDR tables and maps')
    p = sub.add_parser('fit-gev', parents=[common], help='GEV model of normalised victim SDR')
    p.add_argument('--table', help='victim SDR CSV (default <out>/victim_sdr.csv)')
    p.add_argument('--gamma-db', type=float, help='IBO for the theory normalisation')
    p = sub.add_parser('autocorr', parents=[common], help='spatial autocorrelation of an SDR map')
    p.add_argument('--table', help='SDR map CSV; a synthetic map is used when omitted')
    p.add_argument('--column', default='victim_sdr_db')
    sub.add_parser('dataset', parents=[common], help='feature/label records for the regressor')
    p = sub.add_parser('train', parents=[common], help='train the CNN regressor')
    p.add_argument('--dataset')
    p.add_argument('--resume', help='model JSON to continue training')
    p = sub.add_parser('eval', parents=[common], help='score a model on the held-out IBOs')
    p.add_argument('--model')
    p.add_argument('--dataset')
    p = sub.add_parser('prune', parents=[common], help='magnitude pruning with fine-tuning')
    p.add_argument('--model')
    p.add_argument('--dataset')
    p.add_argument('--train-dataset')
    p.add_argument('--sparsity', type=float)
    p = sub.add_parser('allocate', parents=[common], help='per-UE IBO allocation vs a fixed IBO')
    p.add_argument('--model')
    p.add_argument('--oracle', action='store_true', help='choose by simulating every candidate')
    p.add_argument('--predictor', choices=allocation.PREDICTORS)
    p.add_argument('--sigma-interf-dbm', type=float)
    p = sub.add_parser('report', parents=[common], help='collect the CSV tables into a workbook')
    p.add_argument('--name', default='report.xlsx')
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format=LOG_FORMAT)
    try:
        cfg = load_config(args.config, args.seed, args.threads, args.out)
        return COMMANDS[args.command](args, cfg)
    except Exception as e:
        log.error(f"[{args.command.upper()}] {type(e).__name__}: {e}")
        log.debug(traceback.format_exc())
        return exit_code_for(e)


if __name__ == '__main__':
    sys.exit(main())
