"""Command-line pipeline: simulate, ingest, topics, events, curves,
decompose, persistence, report.

Every subcommand writes a manifest JSON carrying its full flag set and a
stable config hash, so any output file can be traced to the exact inputs
that produced it.  Exit codes: 0 success, 2 config error, 3 data error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from ._common import ConfigError, DataError, config_hash, split_seed
from .exposure import EventSet, extract_events
from .graph import FollowerGraph
from .ingest import (ParseStats, SymbolTables, TweetLog, Window, build_catalog,
                     build_noun_bags, parse_log)
from .sim import (SimConfig, generate_world, mechanism, meme_name, read_truth,
                  simulate, write_graph_tsv, write_log_tsv, write_truth)
from .stats import (EventFilter, decompose, estimate_curve_kappa,
                    estimate_curve_s, estimate_surface, event_cdfs,
                    ks_distance, mann_whitney_u, persistence,
                    seed_relative_alignment, topical_user_lift)
from .topics import (CLASS_LABELS, ProfileSet, fit_lda, profiles_from_model)

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib


def _write_manifest(out_dir: Path, command: str, config: dict, outputs: list):
    manifest = {
        "command": command,
        "config": config,
        "config_hash": config_hash(config),
        "outputs": [str(p) for p in outputs],
        "version": __version__,
    }
    path = out_dir / f"{command}.manifest.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _flag_dict(args, skip=("func", "config")):
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _load_log(args) -> TweetLog:
    stats = ParseStats()
    log = TweetLog.from_file(args.log, schema=args.schema, strict=args.strict,
                             stats=stats)
    if stats.malformed or stats.out_of_order:
        print(f"parse: skipped {stats.malformed} malformed and "
              f"{stats.out_of_order} out-of-order lines", file=sys.stderr)
    return log


def _resolve_window(args, log: TweetLog) -> Window:
    have = [args.emerge_start, args.emerge_end, args.analysis_end]
    if all(v is not None for v in have):
        return Window(args.emerge_start, args.emerge_end, args.analysis_end)
    if any(v is not None for v in have):
        raise ConfigError("give all of --emerge-start/--emerge-end/"
                          "--analysis-end or none")
    t0, t1 = log.span
    return Window.from_span(t0, t1)


def _write_meme_table(log: TweetLog, out_dir: Path) -> Path:
    path = out_dir / "meme_table.tsv"
    with open(path, "w", encoding="utf-8") as fh:
        for i in range(len(log.tables.memes)):
            fh.write(f"{i}\t{log.tables.kind_label(i)}\t{log.tables.memes.name(i)}\n")
    return path


def _read_meme_table(path) -> dict:
    name_to_id = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            idx, _kind, name = line.rstrip("\n").split("\t")
            name_to_id[name] = int(idx)
    return name_to_id


def _load_profiles_csv(path, name_to_id=None):
    """profiles.csv -> {kind: ProfileSet}; meme names resolved via table."""
    groups: dict[str, list] = {}
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split(",")
        k = len([c for c in header if c.startswith("theta_")])
        for line in fh:
            parts = line.rstrip("\n").split(",")
            entity, kind, _entropy, label = parts[:4]
            theta = np.asarray([float(x) for x in parts[4:4 + k]])
            if kind == "user":
                ident = int(entity)
            else:
                if name_to_id is None:
                    raise ConfigError("need --tables to resolve meme names")
                if entity not in name_to_id:
                    continue
                ident = name_to_id[entity]
            groups.setdefault(kind, []).append(
                (ident, theta, CLASS_LABELS.index(label)))
    out = {}
    for kind, rows in groups.items():
        ids = np.asarray([r[0] for r in rows], dtype=np.int64)
        theta = np.asarray([r[1] for r in rows])
        classes = np.asarray([r[2] for r in rows], dtype=np.uint8)
        out[kind] = ProfileSet(kind, ids, theta, classes=classes)
    return out


def _merged_meme_profiles(profile_sets: dict) -> ProfileSet:
    """Hashtag and URL memes share one id space; merge their profile sets."""
    parts = [ps for kind, ps in profile_sets.items() if kind != "user"]
    if not parts:
        raise DataError("no meme profiles found")
    if len(parts) == 1:
        return parts[0]
    ids = np.concatenate([p.ids for p in parts])
    theta = np.vstack([p.theta for p in parts])
    classes = np.concatenate([p.classes for p in parts])
    return ProfileSet("meme", ids, theta, classes=classes)


def _profiles_from_truth(truth_path, log: TweetLog):
    config, _mech = read_truth(truth_path)
    world = generate_world(config)
    users = world.user_profiles
    ids, rows = [], []
    for i in range(config.n_memes):
        interned = log.tables.memes.get(meme_name(i))
        if interned is not None:
            ids.append(interned)
            rows.append(i)
    memes = ProfileSet("hashtag", np.asarray(ids, dtype=np.int64),
                       world.meme_profiles.theta[rows],
                       classes=world.meme_profiles.classes[rows])
    return users, memes


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    mech = mechanism(args.mechanism)
    config = SimConfig(n_users=args.users, n_memes=args.memes,
                       k_topics=args.k_topics, epochs=args.epochs,
                       seed=args.seed)
    world = generate_world(config)
    log = simulate(world, mech)
    log_path = out_dir / "log.tsv"
    graph_path = out_dir / "graph.tsv"
    truth_path = out_dir / "truth.json"
    write_log_tsv(log, log_path)
    write_graph_tsv(world.graph, graph_path)
    write_truth(truth_path, config, mech)
    _write_manifest(out_dir, "simulate", _flag_dict(args),
                    [log_path, graph_path, truth_path])
    print(f"simulate: {len(log)} tweets, {world.graph.n_edges} edges "
          f"-> {out_dir}")
    return 0


def cmd_ingest(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    log = _load_log(args)
    window = _resolve_window(args, log)
    catalog = build_catalog(log, window,
                            english_threshold=args.english_threshold,
                            min_adopters=args.min_adopters)
    cat_path = out_dir / "catalog.csv"
    catalog.to_csv(cat_path)
    table_path = _write_meme_table(log, out_dir)
    _write_manifest(out_dir, "ingest", _flag_dict(args), [cat_path, table_path])
    n_acc = int(catalog.accepted.sum())
    print(f"ingest: {len(catalog)} memes, {n_acc} accepted -> {cat_path}")
    return 0


def cmd_topics(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    log = _load_log(args)
    window = _resolve_window(args, log)
    user_bags, meme_bags = build_noun_bags(iter(log), window.prior_window)
    if not user_bags and not meme_bags:
        raise DataError("no noun bags in the prior window; cannot fit topics")
    docs = {("user", u): bag for u, bag in user_bags.items()}
    docs.update({("meme", m): bag for m, bag in meme_bags.items()})
    alpha = args.alpha if args.alpha is not None else 50.0 / args.k
    model = fit_lda(docs, k=args.k, iterations=args.iters, alpha=alpha,
                    beta=args.beta, seed=args.seed)
    model_path = out_dir / "model.bin"
    model.save(model_path)

    # classify per population: users, hashtag memes, url memes
    sets = []
    user_keys = sorted(u for (t, u) in docs if t == "user")
    uset = ProfileSet("user", np.asarray(user_keys),
                      np.asarray([model.doc_theta(("user", u)) for u in user_keys]))
    _maybe_classify(uset, args.quantile)
    sets.append(uset)
    for kind in ("hashtag", "url"):
        keys = sorted(m for (t, m) in docs
                      if t == "meme" and log.tables.kind_label(m) == kind)
        if keys:
            mset = ProfileSet(kind, np.asarray(keys),
                              np.asarray([model.doc_theta(("meme", m))
                                          for m in keys]))
            _maybe_classify(mset, args.quantile)
            sets.append(mset)

    prof_path = out_dir / "profiles.csv"
    with open(prof_path, "w", encoding="utf-8") as fh:
        head = ",".join(f"theta_{i}" for i in range(args.k))
        fh.write(f"entity_id,kind,entropy,class,{head}\n")
        for ps in sets:
            for i in range(len(ps)):
                name = (str(int(ps.ids[i])) if ps.kind == "user"
                        else log.tables.memes.name(int(ps.ids[i])))
                row = ",".join(f"{x:.8g}" for x in ps.theta[i])
                fh.write(f"{name},{ps.kind},{ps.entropy[i]:.8g},"
                         f"{CLASS_LABELS[ps.classes[i]]},{row}\n")
    table_path = _write_meme_table(log, out_dir)
    _write_manifest(out_dir, "topics", _flag_dict(args),
                    [model_path, prof_path, table_path])
    print(f"topics: {len(docs)} documents, K={args.k} -> {prof_path}")
    return 0


def _maybe_classify(ps: ProfileSet, quantile: float):
    need = int(np.ceil(1.0 / quantile))
    if len(ps) >= need:
        ps.classify(quantile)


def cmd_events(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    log = _load_log(args)
    window = _resolve_window(args, log)
    graph = FollowerGraph.load_edges(args.graph)
    catalog = build_catalog(log, window,
                            english_threshold=args.english_threshold,
                            min_adopters=args.min_adopters)
    if args.profiles_from_truth:
        users, memes = _profiles_from_truth(args.profiles_from_truth, log)
    elif args.profiles:
        name_to_id = {log.tables.memes.name(i): i
                      for i in range(len(log.tables.memes))}
        sets = _load_profiles_csv(args.profiles, name_to_id)
        if "user" not in sets:
            raise DataError("profiles file has no user profiles")
        users = sets["user"]
        memes = _merged_meme_profiles(sets)
    else:
        raise ConfigError("need --profiles or --profiles-from-truth")
    events = extract_events(log, graph, catalog, users, memes, window,
                            eligibility=args.eligibility,
                            kappa_cap=args.kappa_cap)
    spool_path = out_dir / "events.spool"
    events.save_spool(spool_path)
    outputs = [spool_path]
    if args.csv:
        csv_path = out_dir / "events.csv"
        events.to_csv(csv_path, meme_names=lambda m: log.tables.memes.name(m))
        outputs.append(csv_path)
    table_path = _write_meme_table(log, out_dir)
    outputs.append(table_path)
    _write_manifest(out_dir, "events", _flag_dict(args), outputs)
    print(f"events: {len(events)} explicit events, "
          f"{events.zero_agg_total()} aggregated zero rows -> {spool_path}")
    return 0


def _class_filter(args, profile_sets) -> EventFilter:
    memes = None
    if args.meme_class != "all" or args.kind != "all":
        ids = []
        for kind, ps in profile_sets.items():
            if kind == "user":
                continue
            if args.kind != "all" and kind != args.kind:
                continue
            if args.meme_class != "all":
                sel = ps.classes == CLASS_LABELS.index(args.meme_class)
                ids.append(ps.ids[sel])
            else:
                ids.append(ps.ids)
        memes = np.concatenate(ids) if ids else np.zeros(0, np.int64)
    classes = None if args.user_class == "all" else [args.user_class]
    return EventFilter(memes=memes, user_classes=classes)


def _load_event_inputs(args):
    events = EventSet.load_spool(args.events)
    name_to_id = _read_meme_table(args.tables) if args.tables else None
    sets = _load_profiles_csv(args.profiles, name_to_id) if args.profiles else {}
    meme_profiles = _merged_meme_profiles(sets) if sets else None
    return events, sets, meme_profiles


def cmd_curves(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    events, sets, meme_profiles = _load_event_inputs(args)
    filt = (EventFilter() if meme_profiles is None
            else _class_filter(args, sets))
    seed = args.seed if args.seed is not None else 0
    if args.by == "kappa":
        curve = estimate_curve_kappa(events, filt, kappa_max=args.kappa_max,
                                     ci=args.ci, b_boot=args.boot, seed=seed)
    else:
        curve = estimate_curve_s(events, filt, s_bins=args.s_bins,
                                 kappa_max=args.kappa_max, ci=args.ci,
                                 b_boot=args.boot, seed=seed)
    name = f"curve_{args.by}_{args.meme_class}_{args.user_class}_{args.kind}.csv"
    path = out_dir / name
    curve.to_csv(path)
    _write_manifest(out_dir, f"curves_{args.by}", _flag_dict(args), [path])
    print(f"curves: -> {path}")
    return 0


def cmd_decompose(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    events, sets, meme_profiles = _load_event_inputs(args)
    filt = (EventFilter() if meme_profiles is None
            else _class_filter(args, sets))
    surface = estimate_surface(events, filt, s_bins=args.s_bins,
                               kappa_max=args.kappa_max)
    dec = decompose(surface, clamp_negative=args.clamp_negative)
    outputs = []
    surf_path = out_dir / "surface.csv"
    surface.to_csv(surf_path)
    outputs.append(surf_path)

    ext_path = out_dir / "external_s.csv"
    with open(ext_path, "w", encoding="utf-8") as fh:
        fh.write("bin_s_low,bin_s_high,n_e,n_a,p_external\n")
        for b in range(surface.s_bins):
            fh.write(f"{b / surface.s_bins:.6g},{(b + 1) / surface.s_bins:.6g},"
                     f"{surface.n_e[0, b]},{surface.n_a[0, b]},"
                     f"{dec.external_s[b]:.10g}\n")
    outputs.append(ext_path)

    int_path = out_dir / "internal.csv"
    with open(int_path, "w", encoding="utf-8") as fh:
        fh.write("bin_kappa,bin_s_low,bin_s_high,p_internal\n")
        for k in range(surface.kappa_max + 1):
            for b in range(surface.s_bins):
                fh.write(f"{k},{b / surface.s_bins:.6g},"
                         f"{(b + 1) / surface.s_bins:.6g},"
                         f"{dec.internal_surface[k, b]:.10g}\n")
    outputs.append(int_path)

    marg_path = out_dir / "internal_marginals.csv"
    with open(marg_path, "w", encoding="utf-8") as fh:
        fh.write("axis,bin,p_internal\n")
        for k, v in enumerate(dec.internal_kappa):
            fh.write(f"kappa,{k},{v:.10g}\n")
        for b, v in enumerate(dec.internal_s):
            fh.write(f"s,{b},{v:.10g}\n")
    outputs.append(marg_path)
    _write_manifest(out_dir, "decompose", _flag_dict(args), outputs)
    print(f"decompose: -> {out_dir}")
    return 0


def cmd_persistence(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    events, sets, meme_profiles = _load_event_inputs(args)
    rows = []
    scopes = [("all", EventFilter())]
    if meme_profiles is not None:
        for label in ("topical", "non-topical"):
            ids = meme_profiles.ids[meme_profiles.classes
                                    == CLASS_LABELS.index(label)]
            scopes.append((f"{label}-memes", EventFilter(memes=ids)))
        for label in ("topical", "non-topical"):
            scopes.append((f"{label}-users",
                           EventFilter(user_classes=[label])))
    for name, filt in scopes:
        res = persistence(events, filt, s_bins=args.s_bins,
                          kappa_max=args.kappa_max, ci=True,
                          b_boot=args.boot, seed=args.seed or 0)
        rows.append((name, res))
    path = out_dir / "persistence.csv"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("scope,persistence,ci_low,ci_high\n")
        for name, res in rows:
            fh.write(f"{name},{res.ratio:.10g},{res.ci_low:.10g},"
                     f"{res.ci_high:.10g}\n")
    _write_manifest(out_dir, "persistence", _flag_dict(args), [path])
    print(f"persistence: -> {path}")
    return 0


def cmd_report(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    events, sets, meme_profiles = _load_event_inputs(args)
    if len(events) == 0 and events.zero_agg_total() == 0:
        raise DataError("event spool is empty; nothing to report")
    outputs = []
    report: dict = {"version": __version__}

    scopes = {"all": EventFilter()}
    if meme_profiles is not None:
        for label in ("topical", "non-topical"):
            ids = meme_profiles.ids[meme_profiles.classes
                                    == CLASS_LABELS.index(label)]
            if len(ids):
                scopes[f"{label}-memes"] = EventFilter(memes=ids)

    report["cdf_ks"] = {}
    for name, filt in scopes.items():
        cdfs = event_cdfs(events, filt)
        entry = {}
        for dim in ("kappa", "s"):
            exp_cdf = cdfs[(dim, "exposure")]
            ad_cdf = cdfs[(dim, "adoption")]
            csv_path = out_dir / f"cdf_{dim}_{name}.csv"
            with open(csv_path, "w", encoding="utf-8") as fh:
                fh.write("value,f_exposure,f_adoption\n")
                support = exp_cdf.support
                f_ad = (ad_cdf.eval(support) if ad_cdf is not None
                        else np.full(len(support), np.nan))
                f_ex = exp_cdf.eval(support)
                for v, fe, fa in zip(support, f_ex, f_ad):
                    fh.write(f"{v:.6g},{fe:.10g},{fa:.10g}\n")
            outputs.append(csv_path)
            entry[dim] = (float(ks_distance(ad_cdf, exp_cdf))
                          if ad_cdf is not None else None)
        report["cdf_ks"][name] = entry

    seed_res = seed_relative_alignment(events, b_boot=args.boot,
                                       seed=args.seed or 0)
    report["seed_alignment"] = {
        "seed_ratio": seed_res.seed_ratio,
        "seed_ci": list(seed_res.seed_ci),
        "nonseed_ratio": seed_res.nonseed_ratio,
        "nonseed_ci": list(seed_res.nonseed_ci),
    }

    if meme_profiles is not None:
        topical_ids = meme_profiles.ids[meme_profiles.classes == 0]
        if len(topical_ids):
            lift = topical_user_lift(events, topical_ids, b_boot=args.boot,
                                     seed=args.seed or 0)
            report["topical_user_lift"] = {
                "lift": lift.lift, "ci": [lift.ci_low, lift.ci_high],
                "rate_topical_users": lift.rate_topical,
                "rate_nontopical_users": lift.rate_nontopical,
            }
        if args.catalog:
            if not args.tables:
                raise ConfigError("--catalog needs --tables to join names")
            id_to_name = {v: k for k, v in _read_meme_table(args.tables).items()}
            report["adopter_count_test"] = _adopter_count_test(
                args.catalog, sets, id_to_name)

    report_path = out_dir / "report.json"
    with open(report_path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True, default=float)
        fh.write("\n")
    outputs.append(report_path)
    _write_manifest(out_dir, "report", _flag_dict(args), outputs)
    print(f"report: -> {report_path}")
    return 0


def _adopter_count_test(catalog_path, profile_sets, id_to_name) -> dict:
    """Mann-Whitney U on unique-adopter counts, topical vs non-topical memes."""
    by_name = {}
    with open(catalog_path, "r", encoding="utf-8") as fh:
        fh.readline()
        for line in fh:
            parts = line.rstrip("\n").split(",")
            by_name[parts[0]] = int(parts[4])
    topical, nontopical = [], []
    for kind, ps in profile_sets.items():
        if kind == "user":
            continue
        for i in range(len(ps)):
            count = by_name.get(id_to_name.get(int(ps.ids[i])))
            if count is None:
                continue
            label = CLASS_LABELS[ps.classes[i]]
            if label == "topical":
                topical.append(count)
            elif label == "non-topical":
                nontopical.append(count)
    if len(topical) < 2 or len(nontopical) < 2:
        return {}
    u, p = mann_whitney_u(topical, nontopical)
    return {"u": u, "p": p,
            "mean_topical": float(np.mean(topical)),
            "mean_nontopical": float(np.mean(nontopical))}


# ---------------------------------------------------------------------------
# parser


def _add_log_flags(p):
    p.add_argument("--log", required=True, help="tweet log file")
    p.add_argument("--schema", choices=("tsv", "jsonl"), default="tsv")
    p.add_argument("--strict", action="store_true",
                   help="abort on the first malformed line")


def _add_window_flags(p):
    p.add_argument("--emerge-start", type=int, default=None)
    p.add_argument("--emerge-end", type=int, default=None)
    p.add_argument("--analysis-end", type=int, default=None)


def _add_catalog_flags(p):
    p.add_argument("--english-threshold", type=float, default=0.9)
    p.add_argument("--min-adopters", type=int, default=100)


def _add_filter_flags(p):
    p.add_argument("--meme-class", choices=("all", "topical", "non-topical"),
                   default="all")
    p.add_argument("--user-class", choices=("all", "topical", "middle",
                                            "non-topical"), default="all")
    p.add_argument("--kind", choices=("all", "hashtag", "url"), default="all")
    p.add_argument("--s-bins", type=int, default=20)
    p.add_argument("--kappa-max", type=int, default=32)
    p.add_argument("--boot", type=int, default=1000)
    p.add_argument("--seed", type=int, default=None)


def _add_spool_flags(p):
    p.add_argument("--events", required=True, help="event spool file")
    p.add_argument("--profiles", default=None, help="profiles.csv")
    p.add_argument("--tables", default=None, help="meme_table.tsv")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="memeflow",
        description="Topical vs non-topical diffusion analysis pipeline")
    parser.add_argument("--config", default=None,
                        help="TOML file with flag defaults")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic world and log")
    p.add_argument("--mechanism", required=True)
    p.add_argument("--users", type=int, default=1000)
    p.add_argument("--memes", type=int, default=20)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--k-topics", type=int, default=16)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("ingest", help="build the meme catalog")
    _add_log_flags(p)
    _add_window_flags(p)
    _add_catalog_flags(p)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("topics", help="fit topic profiles")
    _add_log_flags(p)
    _add_window_flags(p)
    p.add_argument("--k", type=int, default=100)
    p.add_argument("--iters", type=int, default=1000)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--beta", type=float, default=0.01)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--quantile", type=float, default=0.25)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_topics)

    p = sub.add_parser("events", help="extract exposure/adoption events")
    _add_log_flags(p)
    _add_window_flags(p)
    _add_catalog_flags(p)
    p.add_argument("--graph", required=True, help="edge list file")
    p.add_argument("--profiles", default=None)
    p.add_argument("--profiles-from-truth", default=None,
                   help="truth.json from simulate; bypasses LDA")
    p.add_argument("--eligibility", choices=("active", "all"),
                   default="active")
    p.add_argument("--kappa-cap", type=int, default=32)
    p.add_argument("--csv", action="store_true",
                   help="also dump events as CSV")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_events)

    p = sub.add_parser("curves", help="adoption probability curves")
    _add_spool_flags(p)
    _add_filter_flags(p)
    p.add_argument("--by", choices=("kappa", "s"), required=True)
    p.add_argument("--ci", action="store_true")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_curves)

    p = sub.add_parser("decompose", help="internal/external decomposition")
    _add_spool_flags(p)
    _add_filter_flags(p)
    p.add_argument("--clamp-negative", action="store_true")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("persistence", help="multi-exposure persistence")
    _add_spool_flags(p)
    _add_filter_flags(p)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_persistence)

    p = sub.add_parser("report", help="bundle CDFs, tests and ratios")
    _add_spool_flags(p)
    _add_filter_flags(p)
    p.add_argument("--catalog", default=None, help="catalog.csv for the "
                   "adopter-count significance test")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_report)
    return parser


def _apply_config_file(parser, argv):
    """TOML values become defaults; explicit flags still win."""
    if "--config" not in argv:
        return
    idx = argv.index("--config")
    path = argv[idx + 1]
    with open(path, "rb") as fh:
        data = tomllib.load(fh)
    flat = {}
    for key, value in data.items():
        if isinstance(value, dict):
            for k2, v2 in value.items():
                flat[k2.replace("-", "_")] = v2
        else:
            flat[key.replace("-", "_")] = value
    for action in parser._subparsers._group_actions[0].choices.values():
        known = {a.dest for a in action._actions}
        action.set_defaults(**{k: v for k, v in flat.items() if k in known})
        unknown = set(flat) - known - {"command"}
    # unknown keys are tolerated: sections may target other subcommands


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _apply_config_file(parser, argv)
        args = parser.parse_args(argv)
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
