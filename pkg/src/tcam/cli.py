"""Command-line front end.

Every run prints a one-line effective-config block (``# effective-config
{...}``) before its CSV stats. Saving that line to a file and passing it to
``--replay`` re-runs the command with identical parameters.

Exit codes: 0 ok, 2 I/O, 3 format, 4 inconsistency, 5 model, 6 degenerate
input, 7 config schema.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import changedetect as cd
from . import config as cfgmod
from . import dnn, energy, icl, sim
from .bitstream import MAGIC as BS_MAGIC
from .bitstream import Bitstream, CodecTag, measure_ratio
from .errors import ConfigError, DegenerateInputError, FormatError, TcamError
from .frame import MCB, RgbFrame, YuvFrame, load_frame, psnr, rgb_to_yuv, write_ppm, yuv_to_rgb
from .intra import DEFAULT_QF as INTRA_QF
from .intra import intra_decode, intra_decode_frame, intra_encode
from .jpeg import DEFAULT_QF as JPEG_QF
from .jpeg import jpeg_decode, jpeg_encode

EXIT_IO = 2
BLOCK_TAG = "# effective-config "


# ------------------------------------------------------------------ output

@contextmanager
def atomic(path):
    """Yield a temp path beside `path`; rename over it only on success."""
    path = Path(path)
    tmp = path.with_name(f".tmp-{os.getpid()}-{path.name}")
    try:
        yield tmp
        os.replace(tmp, path)
    finally:
        if tmp.exists():
            tmp.unlink()


def save_bytes(path, data: bytes):
    with atomic(path) as tmp:
        tmp.write_bytes(data)


def save_ppm(path, frame: RgbFrame):
    with atomic(path) as tmp:
        write_ppm(tmp, frame)


def emit(args, header, rows, stream=None):
    stream = stream or sys.stdout
    rows = [list(r) for r in rows]
    if args.pretty:
        cells = [header] + [[_fmt(v) for v in r] for r in rows]
        widths = [max(len(str(c[i])) for c in cells) for i in range(len(header))]
        for c in cells:
            stream.write("  ".join(str(v).rjust(w) for v, w in zip(c, widths)) + "\n")
    else:
        w = csv.writer(stream, lineterminator="\n")
        w.writerow(header)
        w.writerows([[_fmt(v) for v in r] for r in rows])


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.6g}" if math.isfinite(v) else str(v)
    return v


def emit_block(args, scenario=None):
    block = {"command": args.command, "args": _args_dict(args)}
    if scenario is not None:
        block["scenario"] = scenario.doc
    text = json.dumps(block, sort_keys=True, indent=2 if args.pretty else None)
    if args.pretty:
        sys.stdout.write("".join("# " + line + "\n" for line in text.splitlines()))
    else:
        sys.stdout.write(BLOCK_TAG + text + "\n")


def _args_dict(args):
    skip = {"func", "replay", "scenario_doc"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def out_path(args, default):
    return Path(args.out) if args.out else Path(default)


def _stem(path):
    name = Path(path).name
    for suf in (".gz", ".ppm", ".pgm", ".bayer12", ".tcb", ".map", ".bin"):
        if name.endswith(suf):
            name = name[: -len(suf)]
    return name


# ------------------------------------------------------------- scenarios

def scenario_for(args):
    if getattr(args, "scenario_doc", None) is not None:
        return cfgmod.from_document(args.scenario_doc)
    over = {}
    if args.seed is not None:
        over["simulation"] = {"seed": args.seed}
    return cfgmod.load_scenario(args.config, over)


# ------------------------------------------------------------- image cmds

def _load_yuv(path) -> YuvFrame:
    return rgb_to_yuv(load_frame(path))


def _load_reference(path) -> cd.ReferenceState:
    with open(path, "rb") as f:
        head = f.read(len(BS_MAGIC))
    if head == BS_MAGIC:
        return cd.ReferenceState.from_bitstream(Bitstream.load(path))
    return cd.ReferenceState.from_frame(_load_yuv(path))


def cmd_compress(args):
    emit_block(args)
    frame = _load_yuv(args.input)
    t0 = time.perf_counter()
    if args.method == "jpeg":
        qf = args.qf or JPEG_QF
        bs = jpeg_encode(frame, qf)
        dest = out_path(args, _stem(args.input) + ".tcb")
        save_bytes(dest, bs.to_bytes())
        rows = [[args.input, "jpeg", qf, bs.total_bits, measure_ratio(bs), time.perf_counter() - t0]]
        emit(args, ["input", "method", "qf", "bits", "ratio", "wall_s"], rows)
        return 0
    qf = args.qf or INTRA_QF
    if args.method == "intra":
        bs = intra_encode(frame, qf)
        dest = out_path(args, _stem(args.input) + ".tcb")
        save_bytes(dest, bs.to_bytes())
        rows = [[args.input, "intra", qf, bs.total_bits, measure_ratio(bs), time.perf_counter() - t0]]
        emit(args, ["input", "method", "qf", "bits", "ratio", "wall_s"], rows)
        return 0
    if not args.reference:
        raise ConfigError("intra-cd needs --reference", "/args/reference")
    ref = _load_reference(args.reference)
    cmap = cd.change_map(frame, ref, args.tau, cd.Distance(args.distance))
    roi, _ = cd.prune_and_encode(frame, cmap, qf)
    prefix = str(out_path(args, _stem(args.input)))
    save_bytes(prefix + ".ref.tcb", ref.bitstream.to_bytes())
    save_bytes(prefix + ".map", cmap.to_bytes())
    save_bytes(prefix + ".roi.tcb", roi.to_bytes())
    bits = cd.egress_bits(roi, cmap)
    rows = [[args.input, "intra-cd", qf, bits, measure_ratio(roi, cmap.nbits), time.perf_counter() - t0,
             cmap.count(), 1 - cmap.changed_fraction()]]
    emit(args, ["input", "method", "qf", "bits", "ratio", "wall_s", "changed_mcbs", "pruned_fraction"], rows)
    return 0


def cmd_decompress(args):
    emit_block(args)
    bs = Bitstream.load(args.input)
    if bs.codec_tag == CodecTag.JPEG_MCB:
        yuv = jpeg_decode(bs)
    elif bs.codec_tag == CodecTag.INTRA_ROI:
        hdr = bs.image_header()
        if hdr.has_map:
            if not args.map:
                raise ConfigError("RoI stream needs --map to place its MCBs", "/args/map")
            cmap = cd.ChangeMap.load(args.map)
            blank = np.full((hdr.height, hdr.width, 3), args.fill, np.uint8)
            base = rgb_to_yuv(RgbFrame(blank))
            y, u, v = base.y.copy(), base.u.copy(), base.v.copy()
            for (bx, by), m in intra_decode(bs, cmap.bits).items():
                y[by * MCB:(by + 1) * MCB, bx * MCB:(bx + 1) * MCB] = m.y
                u[by * 8:(by + 1) * 8, bx * 8:(bx + 1) * 8] = m.u
                v[by * 8:(by + 1) * 8, bx * 8:(bx + 1) * 8] = m.v
            yuv = YuvFrame(y, u, v, "420")
        else:
            yuv = intra_decode_frame(bs)
    else:
        raise FormatError("not an image bitstream")
    dest = out_path(args, _stem(args.input) + ".ppm")
    save_ppm(dest, yuv_to_rgb(yuv))
    emit(args, ["input", "codec", "width", "height", "bits", "output"],
         [[args.input, bs.codec_tag.name, yuv.width, yuv.height, bs.total_bits, str(dest)]])
    return 0


def cmd_cdmap(args):
    emit_block(args)
    ref = _load_reference(args.reference)
    cmap = cd.change_map(_load_yuv(args.input), ref, args.tau, cd.Distance(args.distance))
    dest = out_path(args, _stem(args.input) + ".map")
    save_bytes(dest, cmap.to_bytes())
    emit(args, ["input", "changed_mcbs", "total_mcbs", "changed_fraction", "map_bits"],
         [[args.input, cmap.count(), cmap.nbits, cmap.changed_fraction(), cmap.nbits]])
    return 0


def cmd_reconstruct(args):
    emit_block(args)
    ref = cd.ReferenceState.from_bitstream(Bitstream.load(args.reference))
    cmap = cd.ChangeMap.load(args.map)
    roi = Bitstream.load(args.roi)
    out = cd.reconstruct(ref, cmap, roi)
    dest = out_path(args, "reconstructed.ppm")
    save_ppm(dest, out)
    rows = []
    if args.truth:
        truth = load_frame(args.truth).data
        pix = np.kron(cmap.bits, np.ones((MCB, MCB), bool))
        rows = [["changed", psnr(out.data, truth, pix)],
                ["unchanged", psnr(out.data, truth, ~pix)],
                ["all", psnr(out.data, truth)]]
    emit(args, ["region", "psnr_db"], rows)
    return 0


def _model_and_ccm(args):
    model = icl.load_model(args.model) if args.model else icl.RadialModel()
    ccm = icl.load_ccm(args.ccm) if args.ccm else None
    return model, ccm


def cmd_correct(args):
    emit_block(args)
    model, ccm = _model_and_ccm(args)
    img = load_frame(args.input).data
    if ccm is not None:
        img = icl.apply_ccm(img, ccm)
    ffm = icl.build_ffm(model, img.shape[1], img.shape[0])
    if args.ffm_out:
        save_bytes(args.ffm_out, ffm.to_bytes())
    out = icl.apply_ffm(img, ffm, args.interp)
    dest = out_path(args, _stem(args.input) + ".corrected.ppm")
    save_ppm(dest, RgbFrame(out))
    emit(args, ["input", "output", "interp", "invalid_pixels", "ccm"],
         [[args.input, str(dest), args.interp, int((~ffm.valid).sum()), "yes" if ccm else "no"]])
    return 0


def cmd_distort(args):
    emit_block(args)
    model, ccm = _model_and_ccm(args)
    img = load_frame(args.input).data
    model.check_monotonic(model.max_radius(img.shape[1], img.shape[0]))
    out = icl.distort(img, model)
    if ccm is not None:
        out = icl.apply_ccm(out, ccm)
    dest = out_path(args, _stem(args.input) + ".distorted.ppm")
    save_ppm(dest, RgbFrame(out))
    emit(args, ["input", "output"], [[args.input, str(dest)]])
    return 0


# ---------------------------------------------------------------- dnn cmd

def cmd_nncompress(args):
    emit_block(args)
    if args.weights:
        layers = dnn.read_weights(args.weights)
        name = args.weights
    elif args.synthetic:
        layers = dnn.synthetic_network(np.random.default_rng(args.seed or 0), args.scale)
        name = "synthetic"
    else:
        raise ConfigError("give a weights file or --synthetic", "/args/weights")
    for i, t in enumerate(layers):
        if not t.values.any():
            raise DegenerateInputError(f"layer {i} (shape {t.shape}) is all zero")
    net = dnn.compress_network(layers, args.sparsity, args.levels)
    blob = net.to_bytes()
    dest = out_path(args, _stem(name) + ".nn")
    save_bytes(dest, blob)
    verify = ""
    if args.verify:
        got = dnn.decompress_network(dnn.CompressedNetwork.from_bytes(blob))
        want = dnn.reference_model(layers, args.sparsity, args.levels)
        ok = all(a.shape == b.shape and np.array_equal(a.values, b.values) for a, b in zip(got, want))
        if not ok:
            raise TcamError("decompressed network differs from the pruned+quantized model")
        verify = "OK"
        print("roundtrip OK", file=sys.stderr)
    emit(args, ["input", "layers", "weights", "payload_bits", "net_bits_per_weight",
                "gross_bits_per_weight", "container_bytes", "roundtrip"],
         [[name, len(layers), net.weight_count, net.payload_bits, net.bits_per_weight,
           len(blob) * 8 / net.weight_count, len(blob), verify]])
    return 0


# ------------------------------------------------------------ energy cmds

def _rates_override(args, sc):
    if not args.rates:
        return sc.rates
    parts = args.rates.split(",")
    if len(parts) != 4:
        raise ConfigError("--rates takes interval_s,p_person,p_face,p_unregistered", "/rates")
    try:
        iv, pp, pf, pu = (float(p) for p in parts)
    except ValueError:
        raise ConfigError(f"--rates values must be numbers, got {args.rates!r}", "/rates") from None
    return energy.EventRates(None if math.isinf(iv) else iv, pp, pf, pu)


def cmd_simulate(args):
    sc = scenario_for(args)
    if args.rates:
        r = _rates_override(args, sc)
        sc = cfgmod.from_document(sc.doc, {"rates": {
            "motion_interval_s": r.motion_interval, "p_person": r.p_person,
            "p_face": r.p_face, "p_unregistered": r.p_unregistered}})
    over = {}
    if args.days is not None:
        over["simulation"] = {"days": args.days}
    if args.method:
        over["method"] = args.method
    if over:
        sc = cfgmod.from_document(sc.doc, over)
    args.rates = None
    args.days = None
    args.method = None
    emit_block(args, sc)
    table, storage, rates, method = sc.table, sc.storage, sc.rates, sc.method
    analytic_uw, led = energy.average_power(rates, table, storage, method)
    if args.trace:
        trace = sim.read_trace(args.trace)
        led = sim.simulate_trace(trace, table, storage, method,
                                 max(sc.days * energy.DAY, trace[-1].time if trace else 0.0))
        mode = "trace"
    elif args.monte_carlo:
        led = sim.monte_carlo_power(rates, sc.days, sc.seed, table, storage, method)[1]
        mode = "monte-carlo"
    else:
        mode = "analytic"
    avg = led.average_power / energy.UW
    recharge = table.p_recharge / energy.UW if sc.recharge else 0.0
    rows = [["mode", mode], ["method", method],
            ["average_power_uW", avg], ["analytic_power_uW", analytic_uw],
            ["lifetime_days", energy.lifetime_days(avg, sc.battery, recharge)],
            ["shelf_life_days", energy.shelf_life_days(sc.battery, table, sc.recharge)],
            ["elapsed_s", led.elapsed], ["flash_peak_frames", led.flash_peak],
            ["flash_frames", led.flash_frames], ["flash_rejected", led.flash_rejected],
            ["egress_s", led.egress_seconds]]
    rows += [[f"share_{c}", s] for c, s in led.shares().items()]
    for name, amps, over_limit in energy.peak_current_report(sc.section("peak_durations_s"), table, sc.battery):
        rows.append([f"peak_current_uA_{name}", amps * 1e6])
        rows.append([f"peak_current_over_limit_{name}", int(over_limit)])
    emit(args, ["key", "value"], rows)
    if args.out:
        with atomic(args.out) as tmp, open(tmp, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["kind", "name", "energy_J", "average_uW"])
            w.writerows(led.rows())
    return 0


def cmd_sweep(args):
    sc = scenario_for(args)
    emit_block(args, sc)
    sw = sc.section("sweep")
    res = energy.sweep_hed(sc.table, sc.storage, sw["motion_interval_s"], sw["pd_grid"],
                           sw["urfd_grid"], sw["method"])
    header = ["p_pd", "p_urfd", "hed_uW", "flat_uW", "savings"]
    if args.out:
        with atomic(args.out) as tmp, open(tmp, "w") as f:
            emit(args, header, res.rows(), f)
    emit(args, header, res.rows())
    return 0


def cmd_placement(args):
    sc = scenario_for(args)
    pl = sc.section("placement")
    bits = args.dnn_bits if args.dnn_bits is not None else pl.get("dnn_bits")
    rate = args.rate if args.rate is not None else pl.get("exec_rate_per_s")
    leak = args.leak if args.leak is not None else pl.get("sram_leak_pW_per_bit")
    over = args.overhead if args.overhead is not None else pl.get("overhead_pJ_per_bit", 0.0)
    for val, key in ((bits, "dnn_bits"), (rate, "exec_rate_per_s"), (leak, "sram_leak_pW_per_bit")):
        if val is None:
            raise ConfigError(f"placement needs {key} (no default exists)", f"/placement/{key}")
    sc = cfgmod.from_document(sc.doc, {"placement": {
        "dnn_bits": bits, "exec_rate_per_s": rate, "sram_leak_pW_per_bit": leak, "overhead_pJ_per_bit": over}})
    args.dnn_bits = args.rate = args.leak = args.overhead = None
    emit_block(args, sc)
    res = energy.placement_optimize(bits, rate, leak * 1e-12, sc.table.flash_read_per_bit, over * 1e-12)
    r = res.crossover_rate
    emit(args, ["choice", "on_chip_uW", "off_chip_uW", "crossover_rate_per_s", "crossover_interval_s"],
         [[res.choice, res.on_chip_w / energy.UW, res.off_chip_w / energy.UW, r,
           1 / r if r > 0 else math.inf]])
    return 0


# ------------------------------------------------------------------ parser

def _globals(p, suppress):
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--config", default=d(None), help="scenario JSON (default: shipped scenario)")
    p.add_argument("--seed", type=int, default=d(None))
    p.add_argument("--pretty", action="store_true", default=d(False), help="aligned tables instead of CSV")
    p.add_argument("--out", default=d(None), help="output file (or prefix for intra-cd)")


def build_parser():
    ap = argparse.ArgumentParser(prog="tcam", description=__doc__.split("\n\n")[0])
    _globals(ap, False)
    ap.add_argument("--replay", help="file holding an effective-config block to re-run")
    sub = ap.add_subparsers(dest="command")

    def add(name, func, help):
        p = sub.add_parser(name, help=help)
        _globals(p, True)
        p.set_defaults(func=func)
        return p

    p = add("compress", cmd_compress, "encode an image")
    p.add_argument("input")
    p.add_argument("--method", choices=["jpeg", "intra", "intra-cd"], default="intra")
    p.add_argument("--qf", type=int, default=None, help="quality factor (default per method)")
    p.add_argument("--reference", help="reference image or JPEG bitstream (intra-cd)")
    p.add_argument("--tau", type=int, default=cd.DEFAULT_TAU)
    p.add_argument("--distance", choices=[d.value for d in cd.Distance], default="magnitude")

    p = add("decompress", cmd_decompress, "decode a bitstream to PPM")
    p.add_argument("input")
    p.add_argument("--map", help="change map for RoI streams")
    p.add_argument("--fill", type=int, default=0, help="grey level for uncoded MCBs")

    p = add("cdmap", cmd_cdmap, "change map of a frame against a reference")
    p.add_argument("input")
    p.add_argument("--reference", required=True)
    p.add_argument("--tau", type=int, default=cd.DEFAULT_TAU)
    p.add_argument("--distance", choices=[d.value for d in cd.Distance], default="magnitude")

    p = add("reconstruct", cmd_reconstruct, "rebuild a frame from reference + map + RoI")
    p.add_argument("reference")
    p.add_argument("map")
    p.add_argument("roi")
    p.add_argument("--truth", help="ground-truth image for PSNR")

    p = add("correct", cmd_correct, "lens and colour correction")
    p.add_argument("input")
    p.add_argument("--model", help="radial model file (default: identity)")
    p.add_argument("--ccm", help="colour correction matrix file (default: none)")
    p.add_argument("--interp", choices=["nearest", "bilinear"], default="bilinear")
    p.add_argument("--ffm-out", help="also save the flow field")

    p = add("distort", cmd_distort, "synthesise lens and colour distortion")
    p.add_argument("input")
    p.add_argument("--model")
    p.add_argument("--ccm", help="colour distortion matrix file")

    p = add("nncompress", cmd_nncompress, "compress network weights")
    p.add_argument("weights", nargs="?")
    p.add_argument("--synthetic", action="store_true", help="use a seeded Gaussian network")
    p.add_argument("--scale", type=float, default=1.0, help="channel multiplier for --synthetic")
    p.add_argument("--sparsity", type=float, default=0.5)
    p.add_argument("--levels", type=int, default=dnn.MAX_LEVELS)
    p.add_argument("--verify", action="store_true")

    p = add("simulate", cmd_simulate, "average power, lifetime and breakdown")
    p.add_argument("--trace", help="CSV: time_s,person,face,registered")
    p.add_argument("--rates", help="interval_s,p_person,p_face,p_unregistered")
    p.add_argument("--days", type=float)
    p.add_argument("--method", choices=energy.METHODS)
    p.add_argument("--monte-carlo", action="store_true", help="seeded stochastic trace")

    add("sweep", cmd_sweep, "HED savings grid")

    p = add("placement", cmd_placement, "on- vs off-chip DNN parameter storage")
    p.add_argument("--dnn-bits", type=float)
    p.add_argument("--rate", type=float, help="executions per second")
    p.add_argument("--leak", type=float, help="SRAM leakage, pW per bit")
    p.add_argument("--overhead", type=float, help="transfer overhead, pJ per bit")
    return ap


def _read_block(path):
    """Pull the effective-config JSON out of saved command output."""
    with open(path) as f:
        lines = f.read().splitlines()
    body = None
    for line in lines:
        if line.startswith(BLOCK_TAG):
            body = line[len(BLOCK_TAG):]
            break
    if body is None:  # --pretty form: leading '# ' lines
        head = []
        for line in lines:
            if not line.startswith("#"):
                break
            head.append(line[2:] if line.startswith("# ") else line[1:])
        body = "\n".join(head) if head else "\n".join(lines)
    try:
        return json.loads(body)
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}: not an effective-config block ({e})") from None


def parse(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    if args.replay:
        block = _read_block(args.replay)
        ns = build_parser().parse_args([block["command"]] + _required_positionals(block))
        for k, v in block["args"].items():
            setattr(ns, k, v)
        ns.replay = None
        ns.scenario_doc = block.get("scenario")
        for k in ("out", "pretty"):  # the replay may redirect output
            if getattr(args, k):
                setattr(ns, k, getattr(args, k))
        return ns
    if not args.command:
        ap.error("a subcommand is required")
    return args


def _required_positionals(block):
    a = block["args"]
    names = {"compress": ["input"], "decompress": ["input"], "cdmap": ["input", "--reference"],
             "reconstruct": ["reference", "map", "roi"], "correct": ["input"], "distort": ["input"]}
    out = []
    for n in names.get(block["command"], []):
        if n.startswith("--"):
            out += [n, str(a[n[2:]])]
        else:
            out.append(str(a[n]))
    return out


def main(argv=None) -> int:
    try:
        args = parse(argv)
        return args.func(args)
    except TcamError as e:
        print(f"tcam: error: {e}", file=sys.stderr)
        return e.exit_code
    except OSError as e:
        print(f"tcam: I/O error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
