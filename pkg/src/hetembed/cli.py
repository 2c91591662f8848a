"""Command line driver: generate / ingest / train / eval / report.

Every subcommand reads the same INI config (overridable per flag and via
``HNE_SECTION_KEY`` environment variables), writes its artifacts under one
output directory, and leaves a run manifest there.  A failing run leaves
a FAILED marker next to whatever partial artifacts exist and exits 1.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import time
import traceback

from . import config as cfgmod
from .config import (RunConfig, config_digest, load_config, parse_link_types,
                     parse_meta_paths, write_failed_marker, write_manifest)
from .embio import load_embeddings, save_embeddings
from .evaluation import run_link_prediction, run_node_classification
from .graph import MetaPath, load_graph, save_graph, split_links
from .relational import KINDS as RELATIONAL_KINDS
from .relational import train_relational
from .reporting import emit_report, emit_tsv, load_reports, render_figures
from .rgcn import train_rgcn
from .sampler import WalkConfig, build_homogeneous_corpus, build_walk_corpus, \
    write_walks
from .shallow import ShallowModelSpec, TrainSpec, train_shallow
from .synthetic import LinkTypeSpec, SyntheticSpec, generate_synthetic

_SHALLOW = ("metapath2vec", "pte", "hin2vec", "heer")


def synthetic_spec(cfg):
    return SyntheticSpec(
        type_counts=tuple(cfg.type_counts),
        communities=cfg.communities,
        p_in=cfg.p_in, p_out=cfg.p_out,
        link_types=tuple(LinkTypeSpec(a, b, d)
                         for a, b, d in parse_link_types(cfg.link_types)),
        labeled_type=cfg.labeled_type,
        attr_dim=cfg.attr_dim, attr_noise=cfg.attr_noise)


def obtain_graph(cfg):
    """Graph from the configured data files, else the synthetic spec."""
    if cfg.node_file and cfg.link_file:
        return load_graph(cfg.node_file, cfg.link_file,
                          cfg.label_file or None, attr_mode=cfg.attr_mode)
    g, _ = generate_synthetic(synthetic_spec(cfg), cfg.seed)
    return g


def train_spec(cfg):
    return TrainSpec(dim=cfg.dim, learning_rate=cfg.learning_rate,
                     negatives=cfg.negatives, epochs=cfg.epochs,
                     batch=cfg.batch, threads=cfg.threads, seed=cfg.seed,
                     margin=cfg.margin, p_norm=cfg.p_norm,
                     loss_mode=cfg.loss, fanout=cfg.fanout,
                     hidden=cfg.hidden, layers=cfg.layers)


def walk_config(cfg, g):
    mps = []
    if cfg.meta_paths:
        dense_of = {int(orig): l for l, orig in enumerate(g.link_type_ids)}
        for ids in parse_meta_paths(cfg.meta_paths):
            try:
                dense = [dense_of[i] for i in ids]
            except KeyError as e:
                raise cfgmod.ConfigError(
                    f"meta-path names unknown link type {e.args[0]}") from None
            mps.append(MetaPath(dense, g))
    return WalkConfig(walks_per_node=cfg.walks_per_node,
                      walk_length=cfg.walk_length, window=cfg.window,
                      meta_paths=tuple(mps), seed=cfg.seed)


def train_method(g, cfg):
    """Dispatch to the right trainer; returns (emb, aux)."""
    ts = train_spec(cfg)
    if cfg.method in _SHALLOW:
        model = ShallowModelSpec(cfg.method)
        wc = walk_config(cfg, g) if model.pair_source == "walks" else None
        return train_shallow(g, model, ts, wc)
    if cfg.method in RELATIONAL_KINDS:
        return train_relational(g, cfg.method, ts)
    return train_rgcn(g, ts)


def _dump_walks_if_asked(g, cfg, out_dir, artifacts):
    if not cfg.dump_walks or cfg.method not in ("metapath2vec", "hin2vec"):
        return
    wc = walk_config(cfg, g)
    if cfg.method == "metapath2vec":
        _, _, walks = build_walk_corpus(g, wc, collect_walks=True)
    else:
        _, _, walks = build_homogeneous_corpus(g, wc, collect_walks=True)
    path = os.path.join(out_dir, "walks.txt")
    write_walks(walks, g, path)
    artifacts["walks"] = path


# ---------------------------------------------------------------------- #
# subcommands


def cmd_generate(cfg, out_dir):
    g, communities = generate_synthetic(synthetic_spec(cfg), cfg.seed)
    node_f = os.path.join(out_dir, "node.tsv")
    link_f = os.path.join(out_dir, "link.tsv")
    label_f = os.path.join(out_dir, "label.tsv")
    save_graph(g, node_f, link_f, label_f)
    stats = {
        "nodes": int(g.n_nodes),
        "node_types": int(g.n_types),
        "links": int(g.n_links()),
        "link_types": int(g.n_link_types),
        "communities": int(cfg.communities),
        "labeled_nodes": len(g.labels),
    }
    stats_f = os.path.join(out_dir, "stats.json")
    with open(stats_f, "w") as fh:
        json.dump(stats, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return {"node_file": node_f, "link_file": link_f, "label_file": label_f,
            "stats": stats_f}


def cmd_ingest(cfg, out_dir):
    if not (cfg.node_file and cfg.link_file):
        raise cfgmod.ConfigError(
            "ingest needs node_file and link_file in [data]")
    g = load_graph(cfg.node_file, cfg.link_file, cfg.label_file or None,
                   attr_mode=cfg.attr_mode)
    node_f = os.path.join(out_dir, "node.tsv")
    link_f = os.path.join(out_dir, "link.tsv")
    label_f = os.path.join(out_dir, "label.tsv") if g.labels else None
    save_graph(g, node_f, link_f, label_f)
    map_f = os.path.join(out_dir, "id_map.tsv")
    with open(map_f, "w") as fh:
        fh.write("dense_id\toriginal_id\tdense_type\toriginal_type\n")
        for v in range(g.n_nodes):
            k = g.node_type_of(v)
            fh.write("%d\t%d\t%d\t%d\n"
                     % (v, g.original_ids[v], k, g.type_ids[k]))
    stats = {
        "nodes": int(g.n_nodes),
        "node_types": int(g.n_types),
        "links": int(g.n_links()),
        "link_types": int(g.n_link_types),
        "directed_link_types": [int(g.link_type_ids[l])
                                for l in range(g.n_link_types)
                                if g.directed[l]],
        "labeled_nodes": len(g.labels),
        "attributed_types": [int(g.type_ids[k]) for k in range(g.n_types)
                             if g.attributes[k] is not None],
    }
    stats_f = os.path.join(out_dir, "stats.json")
    with open(stats_f, "w") as fh:
        json.dump(stats, fh, indent=2, sort_keys=True)
        fh.write("\n")
    arts = {"node_file": node_f, "link_file": link_f, "id_map": map_f,
            "stats": stats_f}
    if label_f:
        arts["label_file"] = label_f
    return arts


def cmd_train(cfg, out_dir):
    g = obtain_graph(cfg)
    split = split_links(g, cfg.holdout, cfg.seed)
    emb, _ = train_method(split.train, cfg)
    emb_f = os.path.join(out_dir, "embeddings.tsv")
    save_embeddings(emb, emb_f)
    artifacts = {"embeddings": emb_f}
    _dump_walks_if_asked(split.train, cfg, out_dir, artifacts)
    return artifacts


def cmd_eval(cfg, out_dir, emb_path=None):
    g = obtain_graph(cfg)
    split = split_links(g, cfg.holdout, cfg.seed)
    emb_path = emb_path or os.path.join(out_dir, "embeddings.tsv")
    emb = load_embeddings(emb_path, g)
    tasks = [t.strip() for t in cfg.tasks.split(",") if t.strip()]
    digest = config_digest(cfg)
    artifacts = {}
    for task in tasks:
        if task == "nc":
            if not g.labels:
                raise ValueError(
                    "node classification needs labels; none are loaded")
            rep = run_node_classification(emb, g.labels, cfg.seed,
                                          repeats=cfg.repeats)
            out_f = os.path.join(out_dir, "report_nc.json")
        else:
            rep = run_link_prediction(emb, split, g, seed=cfg.seed,
                                      repeats=cfg.repeats)
            out_f = os.path.join(out_dir, "report_lp.json")
        rep.method = cfg.method
        rep.config_digest = digest
        rep.save(out_f)
        artifacts[f"report_{task}"] = out_f
    return artifacts


def cmd_report(report_paths, out_dir):
    reports = load_reports(report_paths)
    json_f = emit_report(reports, "json", os.path.join(out_dir, "report.json"))
    table_f = emit_report(reports, "table", os.path.join(out_dir, "report.txt"))
    tsv_f = emit_tsv(reports, os.path.join(out_dir, "report.tsv"))
    figures = render_figures(reports, os.path.join(out_dir, "figures"))
    arts = {"grid_json": json_f, "grid_table": table_f, "grid_tsv": tsv_f}
    for p in figures:
        arts[os.path.splitext(os.path.basename(p))[0] + "_figure"] = p
    return arts


# ---------------------------------------------------------------------- #
# entry point


def build_parser():
    ap = argparse.ArgumentParser(
        prog="hetembed",
        description="heterogeneous network embedding trainers and benchmarks")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", default=None, help="INI config file")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--threads", type=int, default=None)
        p.add_argument("--strict", action="store_true", default=None,
                       help="single thread, bit-reproducible outputs")
        p.add_argument("--out", default=None, help="output directory")

    for name in ("generate", "ingest", "train", "eval"):
        p = sub.add_parser(name)
        common(p)
        if name == "eval":
            p.add_argument("--emb", default=None,
                           help="embedding file (default <out>/embeddings.tsv)")
    p = sub.add_parser("report")
    common(p)
    p.add_argument("reports", nargs="+", help="eval report JSON files")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    overrides = {"seed": args.seed, "threads": args.threads,
                 "out_dir": args.out}
    if args.strict:
        overrides["strict"] = True
    try:
        cfg = load_config(args.config, overrides=overrides)
    except cfgmod.ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    out_dir = cfg.out_dir
    os.makedirs(out_dir, exist_ok=True)
    started = time.time()
    try:
        if args.command == "generate":
            artifacts = cmd_generate(cfg, out_dir)
        elif args.command == "ingest":
            artifacts = cmd_ingest(cfg, out_dir)
        elif args.command == "train":
            artifacts = cmd_train(cfg, out_dir)
        elif args.command == "eval":
            artifacts = cmd_eval(cfg, out_dir, emb_path=args.emb)
        else:
            artifacts = cmd_report(args.reports, out_dir)
    except Exception as e:
        write_failed_marker(out_dir, f"{type(e).__name__}: {e}\n"
                            + traceback.format_exc())
        write_manifest(out_dir, cfg, {}, started, status="failed",
                       extra={"error": f"{type(e).__name__}: {e}",
                              "command": args.command})
        print(f"error: {e}", file=sys.stderr)
        return 1
    manifest = write_manifest(out_dir, cfg, artifacts, started,
                              extra={"command": args.command})
    print(f"{args.command}: ok ({manifest})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
