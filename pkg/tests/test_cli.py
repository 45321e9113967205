"""Command-line interface: exit codes, output formats, reproducibility."""

import pytest

from streamsim import cli


def run_cli(*argv):
    return cli.main(list(argv))


def parse_stats(text):
    out = {}
    for line in text.strip().splitlines():
        key, val = line.split()
        out[key] = val
    return out


# ------------------------------------------------------------- happy paths

def test_list_kernels(capsys):
    assert run_cli("list-kernels") == 0
    out = capsys.readouterr().out
    for name in ["dot_baseline", "dot_ssr", "dot_ssr_frep", "axpy_ssr",
                 "matvec48_baseline", "matvec48_ssr_frep", "matmul_ssr_frep",
                 "dma_stream", "tcdm_unit_stride", "tcdm_same_bank"]:
        assert name in out


def test_run_text_stats_self_consistent(capsys):
    assert run_cli("run", "dot_ssr_frep", "--n", "64", "--check") == 0
    st = parse_stats(capsys.readouterr().out)
    cycles = int(st["cluster.cycles"])
    assert cycles == int(st["core0.cycles"]) == 91  # pinned small-size run
    util = int(st["core0.fma_executed"]) / cycles
    assert float(st["core0.utilization"]) == pytest.approx(util, abs=1e-6)
    fpc = int(st["cluster.flops"]) / cycles
    assert float(st["cluster.flops_per_cycle"]) == pytest.approx(fpc, abs=1e-6)


def test_run_csv_format(capsys):
    assert run_cli("run", "dot_ssr", "--n", "16", "--format", "csv") == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == ",".join(cli.CSV_COLUMNS)
    row = dict(zip(cli.CSV_COLUMNS, lines[1].split(",")))
    assert row["kernel"] == "dot_ssr"
    assert row["n"] == "16" and row["seed"] == "0"
    assert int(row["fma_executed"]) == 16 + 3  # 16 fmadd + 3 reduce fadd


def test_sweep_emits_one_row_per_size(capsys):
    assert run_cli("run", "dot_ssr_frep", "--sweep", "n=16,32,64") == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 4
    assert [l.split(",")[1] for l in lines[1:]] == ["16", "32", "64"]
    # bigger size, better utilization: replay amortizes the scalar prologue
    utils = [float(l.split(",")[-1]) for l in lines[1:]]
    assert utils[0] < utils[1] < utils[2]


def test_stats_and_trace_files_reproducible(tmp_path):
    paths = []
    for tag in ("a", "b"):
        sp, tp = tmp_path / f"s{tag}.txt", tmp_path / f"t{tag}.txt"
        assert run_cli("run", "matvec48_ssr_frep", "--stats-out", str(sp),
                       "--trace-out", str(tp)) == 0
        paths.append((sp.read_bytes(), tp.read_bytes()))
    assert paths[0] == paths[1]
    assert b"core0.cycles 2473" in paths[0][0]
    assert paths[0][1].count(b"\n") > 2000  # one row per live core-cycle


def test_assemble_listing(tmp_path, capsys):
    src = tmp_path / "k.s"
    src.write_text(".data\nv: .double 1.5\n.text\nli t0, v\nhalt\n")
    assert run_cli("assemble", str(src)) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "0x00000000: li t0, 65536"
    assert out[1] == "0x00000004: halt"
    assert out[2] == ".data 0x00010000 8 bytes"
    dst = tmp_path / "k.lst"
    assert run_cli("assemble", str(src), "-o", str(dst)) == 0
    assert dst.read_text().splitlines() == out


def test_points_text_frozen(capsys):
    assert run_cli("points") == 0
    out = capsys.readouterr().out
    hp = next(l for l in out.splitlines() if l.startswith("high_performance"))
    me = next(l for l in out.splitlines() if l.startswith("max_efficiency"))
    assert "54.000 Gflop/s" in hp and "9.216 Tflop/s" in hp and "n/a" in hp
    assert "24.000 Gflop/s" in me and "4.096 Tflop/s" in me
    assert "188.0" in me and "0.133 W" in me


def test_points_csv_frozen(capsys):
    assert run_cli("points", "--format", "csv") == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0].startswith("name,vdd,freq_ghz,")
    rows = {l.split(",")[0]: l for l in lines[1:]}
    assert rows["high_performance"] == \
        "high_performance,0.90,1.125,5.4e+10,9.216e+12,n/a,n/a"
    assert rows["max_efficiency"] == \
        "max_efficiency,0.60,0.500,2.4e+10,4.096e+12,188.0,0.133"


def test_roofline_text(capsys):
    assert run_cli("roofline") == 0
    out = capsys.readouterr().out.splitlines()
    # peak: 1024 cores x 2 flop x 1.125 GHz; ridge 2.304e12 / 256e9
    assert out[0] == ("# peak 2.304 Tflop/s, bandwidth 256.0 GB/s, "
                      "ridge 9.000 flop/byte")
    body = "\n".join(out)
    assert "pool_avg" in body and "conv_residual_block" in body
    pool = next(l for l in out if l.startswith("pool_avg"))
    assert "memory" in pool and "64.000 Gflop/s" in pool
    deep = next(l for l in out if l.startswith("conv_3x3_deep"))
    assert "compute" in deep and "2.304 Tflop/s" in deep


def test_roofline_measured_detachment(tmp_path, capsys):
    stats = tmp_path / "mv.txt"
    assert run_cli("run", "matvec48_ssr_frep", "--stats-out", str(stats)) == 0
    capsys.readouterr()
    assert run_cli("roofline", "--measured", f"conv_3x3_mid={stats}",
                   "--format", "csv") == 0
    lines = capsys.readouterr().out.strip().splitlines()
    row = next(l for l in lines if l.startswith("conv_3x3_mid,"))
    cols = row.split(",")
    measured, detach = float(cols[4]), float(cols[5])
    fpc = float(parse_stats(stats.read_text())["cluster.flops_per_cycle"])
    assert measured == pytest.approx(fpc * 1.125e9, rel=1e-4)
    assert 0.0 < detach < 1.0
    # unmeasured rows leave both columns empty
    other = next(l for l in lines if l.startswith("pool_avg,"))
    assert other.endswith(",,")


# ------------------------------------------------------------- failure paths

def test_exit_unknown_kernel(capsys):
    assert run_cli("run", "nope") == 4
    err = capsys.readouterr().err
    assert err == "error: UnknownKernel: unknown kernel 'nope'; see list-kernels\n"


def test_exit_bad_size_is_config(capsys):
    assert run_cli("run", "dot_baseline", "--n", "3") == 7
    assert "error: ConfigError:" in capsys.readouterr().err


def test_exit_bad_kwarg_is_config(capsys):
    assert run_cli("run", "dot_baseline", "--filler", "5") == 7
    assert "error: ConfigError:" in capsys.readouterr().err


def test_exit_cycle_limit(capsys):
    assert run_cli("run", "matvec48_ssr_frep", "--max-cycles", "50") == 6
    assert "error: CycleLimitExceeded:" in capsys.readouterr().err


def test_exit_parse_error(tmp_path, capsys):
    bad = tmp_path / "bad.s"
    bad.write_text("frobnicate t0\n")
    assert run_cli("assemble", str(bad)) == 3
    assert "error: ParseError:" in capsys.readouterr().err


def test_exit_missing_file_is_usage(tmp_path, capsys):
    assert run_cli("assemble", str(tmp_path / "absent.s")) == 2
    assert "error: FileNotFoundError:" in capsys.readouterr().err


def test_exit_bad_sweep_is_usage(capsys):
    assert run_cli("run", "dot_ssr", "--sweep", "m=1,2") == 2
    assert "UsageError" in capsys.readouterr().err


def test_exit_bad_config_file(tmp_path, capsys):
    cfgp = tmp_path / "c.yaml"
    cfgp.write_text("topology: {}\n")
    assert run_cli("points", "--config", str(cfgp)) == 7
    assert "error: ConfigError:" in capsys.readouterr().err


def test_exit_bad_measured_spec(capsys):
    assert run_cli("roofline", "--measured", "noequalsign") == 7
    assert "error: ConfigError:" in capsys.readouterr().err
