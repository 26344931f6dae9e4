"""Command-line entry point: ``streamasr <subcommand> [flags]``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path


from ..errors import ConfigError, StreamAsrError
from .config import load_config


def _model_config(m: dict, kind: str | None = None, bidirectional: bool | None = None):
    from ..toy_model import DecoderConfig, EncoderConfig, ModelConfig

    kind = kind or m["kind"]
    bidir = m["bidirectional"] if bidirectional is None else bidirectional
    enc = EncoderConfig(num_layers=m["encoder_layers"], hidden=m["encoder_hidden"], bidirectional=bidir)
    hidden = m["prediction_hidden"] if kind == "rnnt" else m["decoder_hidden"]
    dec = DecoderConfig(kind=kind, chunk_size=m["chunk_size"], decoder_hidden=hidden, embed_dim=m["embed_dim"],
                        attention_dim=m["attention_dim"], joint_dim=m["joint_dim"])
    return ModelConfig(vocab_size=m["vocab_size"], encoder=enc, decoder=dec, dropout=m["dropout"], seed=m["seed"])


def _policy(cfg: dict):
    from ..spectral_augment import SpecAugConfig, VtlpConfig
    from .pipeline import AugmentPolicy

    a = cfg["augment"]
    return AugmentPolicy(
        r_as_percent=a["r_as"], vtlp_enabled=a["vtlp"], specaug_enabled=a["specaug"],
        vtlp=VtlpConfig(warp_min=a["warp_min"], warp_max=a["warp_max"]),
        specaug=SpecAugConfig(time_mask_max=a["time_mask_max"], freq_mask_count_max=a["freq_mask_count_max"],
                              freq_mask_width_max=a["freq_mask_width_max"]),
    )


def _read_transcripts(path) -> list:
    """``utt_id<TAB>text`` lines; lines without a tab are keyed by position."""
    out = []
    for i, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines()):
        if not line.strip():
            continue
        key, _, text = line.partition("\t") if "\t" in line else (str(i), "", line)
        out.append((key, text.strip()))
    return out


def _utterances_from_args(args, vocab_size: int, default_n: int):
    """(utterances, tokenizer) from a manifest (with BPE) or from the synthetic feature set."""
    from ..features import power_mel, read_wav
    from ..toy_model import Utterance, synthetic_utterances

    if getattr(args, "manifest", None):
        from .bpe import BpeModel
        from .pipeline import load_manifest

        if not args.bpe:
            raise ConfigError("--manifest needs --bpe to map transcripts to token ids")
        bpe = BpeModel.load(args.bpe)
        if len(bpe) > vocab_size:
            raise ConfigError(f"BPE model has {len(bpe)} tokens but the model vocabulary is {vocab_size}")
        utts = []
        for e in load_manifest(args.manifest):
            feats = power_mel(read_wav(e.wav_path), normalize=True).frames
            utts.append(Utterance(e.utt_id, feats, bpe.encode(e.transcript)))
        return utts, bpe
    n = getattr(args, "utterances", None) or default_n
    return synthetic_utterances(n, vocab_size=vocab_size, seed=getattr(args, "data_seed", 0)), None


def _text(tokens, tokenizer) -> str:
    return tokenizer.decode(tokens) if tokenizer is not None else " ".join(map(str, tokens))


# -- subcommands ----------------------------------------------------------------------


def cmd_toy_corpus(args, cfg):
    from .corpus import make_toy_corpus

    manifest, noises = make_toy_corpus(args.out, n_utts=args.n, seed=args.seed)
    print(f"manifest\t{manifest}\nnoises\t{noises}")


def cmd_featurize(args, cfg):
    from ..features import power_mel, read_wav
    from .pipeline import load_manifest

    if args.wav:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        feats = power_mel(read_wav(args.wav))
        feats.save(out)
        print(f"{out}\t{feats.frames.shape[0]}x{feats.frames.shape[1]}")
        return
    if not args.manifest:
        raise ConfigError("featurize needs --wav or --manifest")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for e in load_manifest(args.manifest):
        feats = power_mel(read_wav(e.wav_path))
        feats.save(out / f"{e.utt_id}.pmel")
        print(f"{e.utt_id}\t{feats.frames.shape[0]}x{feats.frames.shape[1]}")


def cmd_augment(args, cfg):
    from .bpe import BpeModel
    from .pipeline import PipelineStats, load_manifest, load_noise_catalog, run_pipeline

    p = cfg["pipeline"]
    policy = _policy(cfg)
    manifest = load_manifest(args.manifest)
    noises = load_noise_catalog(args.noises) if args.noises else []
    tok = BpeModel.load(args.bpe) if args.bpe else None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    stats = PipelineStats()
    results = sorted(run_pipeline(manifest, policy, p["workers"], p["seed"], noises, tok, p["queue_bound"], stats),
                     key=lambda r: r.utt_id)
    lines = ["utt_id\tsimulated\twarp\tframes\ttoken_ids"]
    for r in results:
        r.features.save(out / f"{r.utt_id}.pmel")
        warp = "" if r.warp is None else f"{r.warp:.6f}"
        lines.append(f"{r.utt_id}\t{int(r.simulated)}\t{warp}\t{r.features.frames.shape[0]}\t"
                     + " ".join(map(str, r.token_ids)))
    (out / "augment.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print("\n".join(lines))
    for f in stats.failures:
        print(f"failed\t{f.utt_id}\t{f.message}", file=sys.stderr)
    print(f"# processed {stats.processed}, failed {len(stats.failures)}, "
          f"output queue high-water {stats.output_high_water}/{stats.output_bound}")
    return 1 if stats.failures else 0


def cmd_bpe_train(args, cfg):
    from .bpe import bpe_train
    from .pipeline import load_manifest

    if args.manifest:
        texts = [e.transcript for e in load_manifest(args.manifest)]
    elif args.text:
        texts = Path(args.text).read_text(encoding="utf-8").splitlines()
    else:
        raise ConfigError("bpe-train needs --manifest or --text")
    model = bpe_train(texts, cfg["bpe"]["size"])
    model.save(args.out)
    print(f"merges\t{len(model.merges)}\nvocab\t{len(model)}\nmodel\t{args.out}")


def cmd_train_toy(args, cfg):
    import torch

    from .. import plotting
    from ..toy_model import ToyModel, TrainConfig, train
    from ..toy_model.checkpoint import save_checkpoint

    m, t = cfg["model"], cfg["train"]
    if args.bpe and args.vocab_size is None:
        from .bpe import BpeModel

        # size the output layer to the tokenizer unless told otherwise
        m = {**m, "vocab_size": len(BpeModel.load(args.bpe))}
    model_cfg = _model_config(m)
    torch.manual_seed(m["seed"])
    data, _ = _utterances_from_args(args, model_cfg.vocab_size, t["utterances"])
    model = ToyModel(model_cfg)
    tcfg = TrainConfig(lam=t["lam"], smoothing=t["smoothing"], layerwise=t["layerwise"])
    lr_fn = (lambda epoch: t["lr"]) if t["lr"] > 0 else None
    log = train(model, data, t["steps"], tcfg, lr_fn=lr_fn, log_every=args.log_every, seed=m["seed"])
    last_epoch = log.epochs[-1] if log.epochs else 0.0
    size = save_checkpoint(args.out, model, {"epoch": last_epoch, "active_layers": log.layers[-1] if log.layers else 0})
    report = Path(args.report_dir) if args.report_dir else Path(args.out).with_suffix("")
    report.mkdir(parents=True, exist_ok=True)
    with open(report / "train_log.csv", "w", encoding="utf-8") as fh:
        fh.write("step,epoch,lr,active_layers,loss\n")
        for row in zip(log.steps, log.epochs, log.lrs, log.layers, log.losses):
            fh.write("{},{:.6f},{:.6e},{},{:.6f}\n".format(*row))
    plotting.plot_loss(log.steps, log.losses, report / "loss.png", title=f"{model_cfg.decoder.kind} training loss")
    plotting.plot_schedule(log.epochs, log.lrs, log.layers, report / "schedule.png")
    first, last = log.losses[0], log.losses[-1]
    print(f"kind\t{model_cfg.decoder.kind}\nsteps\t{t['steps']}\nloss_first\t{first:.4f}\nloss_last\t{last:.4f}")
    print(f"reduction\t{100 * (1 - last / first):.1f}%\ncheckpoint\t{args.out}\t{size} bytes\nreport\t{report}")


def _load_model(path):
    from ..toy_model.checkpoint import load_checkpoint

    model, _ = load_checkpoint(path)
    return model


def cmd_decode(args, cfg):
    import torch

    from ..decode_metrics import decode_utterance

    d = cfg["decode"]
    model = _load_model(args.checkpoint)
    data, tok = _utterances_from_args(args, model.cfg.vocab_size, 16)
    kw = {"max_symbols": d["max_symbols"]} if model.cfg.decoder.kind == "rnnt" else {"threshold": d["threshold"]}
    lines = []
    for utt in data:
        with torch.no_grad():
            hyp = decode_utterance(model, utt.feats, beam=d["beam"], **kw)
        flag = "\t# no_attention" if hyp.no_attention else ""
        lines.append(f"{utt.utt_id}\t{_text(hyp.tokens, tok)}")
        print(lines[-1] + flag)
    if args.out:
        Path(args.out).write_text("\n".join(lines) + "\n", encoding="utf-8")
    if args.ref_out:
        Path(args.ref_out).write_text("\n".join(f"{u.utt_id}\t{_text(u.labels, tok)}" for u in data) + "\n",
                                      encoding="utf-8")


def cmd_eval_wer(args, cfg):
    from ..decode_metrics import corpus_wer

    ref = _read_transcripts(args.ref)
    hyp = dict(_read_transcripts(args.hyp))
    missing = [k for k, _ in ref if k not in hyp]
    if missing:
        raise ConfigError(f"hypothesis file lacks {len(missing)} utterances, e.g. {missing[0]!r}")
    res = corpus_wer((text, hyp[k]) for k, text in ref)
    print(f"WER {res.wer_percent:.2f}")
    print(f"S {res.substitutions} D {res.deletions} I {res.insertions} N {res.ref_words}")


def cmd_bench_latency(args, cfg):
    import torch

    from .. import plotting
    from ..decode_metrics import latency_csv, measure_latency
    from ..decode_metrics.latency import summary_rows
    from ..toy_model import ToyModel

    torch.set_num_threads(1)
    if args.checkpoint:
        model = _load_model(args.checkpoint)
    else:
        model = ToyModel(_model_config(cfg["model"], kind=args.kind))
        model.eval()
    data, _ = _utterances_from_args(args, model.cfg.vocab_size, 100)
    with torch.no_grad():
        encoded = [(u.utt_id, model.encode(u.feats)) for u in data]
    beams = [int(b) for b in args.beams.split(",")]
    reports = measure_latency(encoded, model, beams, repeats=args.repeats)
    text = latency_csv(reports)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text, encoding="utf-8")
    print("beam\tmean_latency_ms\tmean_inference_s")
    for beam, lat, inf in summary_rows(reports):
        print(f"{beam}\t{lat:.4f}\t{inf:.6f}")
    if args.plot:
        plotting.plot_latency(reports, args.plot)
        print(f"plot\t{args.plot}")


def cmd_heatmap(args, cfg):
    import torch

    from ..decode_metrics import decode_utterance
    from ..mocha_attention import render_heatmap

    model = _load_model(args.checkpoint)
    if model.cfg.decoder.kind == "rnnt":
        raise ConfigError("heatmap needs an attention model (mocha or full_attention)")
    data, tok = _utterances_from_args(args, model.cfg.vocab_size, max(args.index + 1, 1))
    utt = data[args.index]
    with torch.no_grad():
        h = model.encode(utt.feats)
        labels = utt.labels
        if args.decoded and model.cfg.decoder.kind == "mocha":
            labels = list(decode_utterance(model, utt.feats, beam=cfg["decode"]["beam"]).tokens)
        _, weights = model.attention_forward(h, labels, noise=False)
    paths = render_heatmap(weights.numpy(), args.out, png=not args.no_png)
    print(f"utt\t{utt.utt_id}\tlabels\t{_text(labels, tok)}")
    for p in paths:
        print(f"wrote\t{p}")


def cmd_count_params(args, cfg):
    from ..decode_metrics.params import MIB, TABLE_ROWS, count_params, format_table

    rows = []
    print("model\tblock\tparams")
    for label, kind, bidir in TABLE_ROWS:
        pc = count_params(_model_config(cfg["model"], kind=kind, bidirectional=bidir))
        for block, n in pc.per_block.items():
            print(f"{label}\t{block}\t{n}")
        rows.append((label, pc.total / 1e6, pc.serialized_bytes / MIB))
    print()
    print(format_table(rows))
    if args.checkpoint:
        from ..toy_model.checkpoint import load_checkpoint

        model, state = load_checkpoint(args.checkpoint)
        pc = count_params(model, state)
        on_disk = Path(args.checkpoint).stat().st_size
        print(f"\ncheckpoint\t{args.checkpoint}\nparams\t{pc.total}\npredicted_bytes\t{pc.serialized_bytes}"
              f"\nfile_bytes\t{on_disk}")


# -- parser ------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="streamasr", description="Streaming ASR toolkit: augmentation, toy models, decoding.")
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, func, help_text, config=True):
        sp = sub.add_parser(name, help=help_text, description=help_text)
        sp.set_defaults(func=func)
        if config:
            sp.add_argument("--config", help="INI config file (bundled names such as toy.cfg also work)")
        return sp

    def data_flags(sp):
        sp.add_argument("--manifest", help="TSV manifest (utt_id, wav_path, transcript)")
        sp.add_argument("--bpe", help="BPE model file used with --manifest")
        sp.add_argument("--utterances", type=int, help="number of synthetic utterances when no manifest is given")
        sp.add_argument("--data-seed", type=int, default=0, help="seed of the synthetic utterances")

    sp = add("toy-corpus", cmd_toy_corpus, "write the bundled synthetic WAV corpus and noise catalog", config=False)
    sp.add_argument("--out", required=True)
    sp.add_argument("--n", type=int, default=16)
    sp.add_argument("--seed", type=int, default=0)

    sp = add("featurize", cmd_featurize, "compute power-mel features (PMEL files)", config=False)
    sp.add_argument("--wav")
    sp.add_argument("--manifest")
    sp.add_argument("--out", required=True)

    sp = add("augment", cmd_augment, "run the augmentation pipeline and write features plus augment.tsv")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--noises", help="noise catalog TSV (noise_id, wav_path, type)")
    sp.add_argument("--bpe")
    sp.add_argument("--out", required=True)
    sp.add_argument("--r-as", type=float, help="percent of utterances sent through the room simulator")
    sp.add_argument("--seed", type=int, help="epoch seed")
    sp.add_argument("--workers", type=int)
    sp.add_argument("--queue-bound", type=int)
    sp.add_argument("--no-vtlp", action="store_true")
    sp.add_argument("--no-specaug", action="store_true")

    sp = add("bpe-train", cmd_bpe_train, "learn a BPE model from transcripts")
    sp.add_argument("--manifest")
    sp.add_argument("--text", help="plain text file, one sentence per line")
    sp.add_argument("--size", type=int, help="target vocabulary size including UNK")
    sp.add_argument("--out", required=True)

    sp = add("train-toy", cmd_train_toy, "train a desk-scale model and write a checkpoint with loss and schedule plots")
    data_flags(sp)
    sp.add_argument("--kind", choices=("mocha", "full_attention", "rnnt"))
    sp.add_argument("--steps", type=int)
    sp.add_argument("--lr", type=float, help="constant learning rate; 0 uses the warm-up schedule")
    sp.add_argument("--vocab-size", type=int)
    sp.add_argument("--layerwise", choices=("on", "off"))
    sp.add_argument("--seed", type=int)
    sp.add_argument("--log-every", type=int, default=0)
    sp.add_argument("--out", required=True, help="checkpoint path")
    sp.add_argument("--report-dir", help="folder for train_log.csv and plots (default: next to the checkpoint)")

    sp = add("decode", cmd_decode, "beam-search decode; prints utt_id<TAB>text")
    data_flags(sp)
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--beam", type=int)
    sp.add_argument("--out", help="write hypotheses here")
    sp.add_argument("--ref-out", help="write the matching references here")

    sp = add("eval-wer", cmd_eval_wer, "word error rate between two utt_id<TAB>text files", config=False)
    sp.add_argument("--ref", required=True)
    sp.add_argument("--hyp", required=True)

    sp = add("bench-latency", cmd_bench_latency, "decoder latency and inference time per beam width (CSV)")
    data_flags(sp)
    sp.add_argument("--checkpoint")
    sp.add_argument("--kind", choices=("mocha", "rnnt"), default="mocha", help="untrained model kind without --checkpoint")
    sp.add_argument("--beams", default="1,4,8,12")
    sp.add_argument("--repeats", type=int, default=1)
    sp.add_argument("--out", help="CSV path")
    sp.add_argument("--plot", help="PNG path")

    sp = add("heatmap", cmd_heatmap, "render the attention alignment of one utterance (PGM, CSV, PNG)")
    data_flags(sp)
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--index", type=int, default=0)
    sp.add_argument("--decoded", action="store_true", help="align the decoded tokens instead of the reference")
    sp.add_argument("--no-png", action="store_true")
    sp.add_argument("--out", required=True, help="output prefix")

    sp = add("count-params", cmd_count_params, "parameter counts and model sizes per architecture")
    sp.add_argument("--checkpoint", help="also check a checkpoint's size against the count")
    return ap


def _overrides(args) -> dict:
    g = lambda name: getattr(args, name, None)  # noqa: E731
    o = {
        ("augment", "r_as"): g("r_as"),
        ("pipeline", "seed"): g("seed") if args.command == "augment" else None,
        ("pipeline", "workers"): g("workers"),
        ("pipeline", "queue_bound"): g("queue_bound"),
        ("bpe", "size"): g("size"),
        ("model", "kind"): g("kind") if args.command == "train-toy" else None,
        ("model", "vocab_size"): g("vocab_size"),
        ("model", "seed"): g("seed") if args.command == "train-toy" else None,
        ("train", "steps"): g("steps"),
        ("train", "lr"): g("lr"),
        ("train", "utterances"): g("utterances"),
        ("decode", "beam"): g("beam"),
    }
    if g("no_vtlp"):
        o[("augment", "vtlp")] = False
    if g("no_specaug"):
        o[("augment", "specaug")] = False
    if g("layerwise") is not None:
        o[("train", "layerwise")] = g("layerwise") == "on"
    return o


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(getattr(args, "config", None), _overrides(args))
        if args.command == "count-params" and args.config is None:
            cfg = load_config("full_scale.cfg")
        rc = args.func(args, cfg)
        return int(rc or 0)
    except (StreamAsrError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
