import numpy as np
import pytest

from proxot.core import SolveTrace
from proxot.exact import exact_ot
from proxot.harness import experiments as ex
from proxot.harness.cli import DEMO_DIR, main
from proxot.harness.io import (
    EmptyImage,
    MalformedFile,
    PpmImage,
    decode_ppm,
    encode_ppm,
    read_histogram,
    read_matrix,
    read_ppm,
    read_trace_csv,
    write_matrix,
    write_ppm,
    write_trace_csv,
)
from proxot.ipot import IpotConfig, ipot
from proxot.sinkhorn import SinkhornConfig, sinkhorn

# --- file formats ------------------------------------------------------------


def test_matrix_round_trip(tmp_path):
    M = np.random.default_rng(0).random((3, 4))
    write_matrix(tmp_path / "m.txt", M)
    np.testing.assert_array_equal(read_matrix(tmp_path / "m.txt"), M)


def test_matrix_errors(tmp_path):
    (tmp_path / "ragged.txt").write_text("1 2\n3\n")
    (tmp_path / "bad.txt").write_text("1 x\n")
    (tmp_path / "empty.txt").write_text("\n")
    for name in ("ragged.txt", "bad.txt", "empty.txt"):
        with pytest.raises(MalformedFile):
            read_matrix(tmp_path / name)


def test_histogram_layouts(tmp_path):
    (tmp_path / "col.txt").write_text("1\n3\n")
    np.testing.assert_allclose(read_histogram(tmp_path / "col.txt"), [0.25, 0.75])


@pytest.mark.parametrize("solver", ["ipot", "sinkhorn"])
def test_trace_csv_final_row_is_distance(tmp_path, solver):
    mu, nu, C = ex.uniform_instance(6, 2, seed=3)
    if solver == "ipot":
        rep = ipot(mu, nu, C, IpotConfig(beta=0.1, max_outer_iters=300))
    else:
        rep = sinkhorn(mu, nu, C, SinkhornConfig(epsilon=0.1))
    write_trace_csv(tmp_path / "t.csv", rep.trace)
    back = read_trace_csv(tmp_path / "t.csv")
    assert back.iteration == sorted(back.iteration)
    assert back.cost[-1] == rep.distance
    assert back.cost == list(rep.trace.cost)
    assert (tmp_path / "t.csv").read_text().splitlines()[0] == ",".join(SolveTrace.COLUMNS)


def test_trace_csv_gap_column(tmp_path):
    tr = SolveTrace()
    tr.append(1, 2.0, 0.0, 0.0, 1.0)
    write_trace_csv(tmp_path / "t.csv", tr, reference=1.5)
    header, row = (tmp_path / "t.csv").read_text().splitlines()
    assert header.endswith(",abs_gap") and row.endswith(",0.5")


def test_ppm_round_trip_byte_exact(tmp_path):
    rng = np.random.default_rng(1)
    body = rng.integers(0, 256, size=5 * 3 * 3, dtype=np.uint8).tobytes()
    for header in (b"P6\n5 3\n255\n", b"P6 # made by hand\n5  3\n# max\n255\n", b"P6 5 3 255 "):
        data = header + body
        (tmp_path / "a.ppm").write_bytes(data)
        img = read_ppm(tmp_path / "a.ppm")
        assert (img.width, img.height) == (5, 3)
        write_ppm(tmp_path / "b.ppm", img)
        assert (tmp_path / "b.ppm").read_bytes() == data


def test_ppm_errors():
    with pytest.raises(MalformedFile):
        decode_ppm(b"P3\n1 1\n255\n0 0 0")
    with pytest.raises(MalformedFile):
        decode_ppm(b"P6\n2 2\n255\n" + bytes(3))
    with pytest.raises(MalformedFile):
        decode_ppm(b"P6\n1 1\n65535\n" + bytes(6))
    with pytest.raises(EmptyImage):
        decode_ppm(b"P6\n0 4\n255\n")
    with pytest.raises(EmptyImage):
        PpmImage(0, 0, np.zeros((0, 0, 3), dtype=np.uint8))


def test_ppm_canonical_header():
    img = PpmImage.from_array(np.zeros((2, 1, 3), dtype=np.uint8))
    assert encode_ppm(img) == b"P6\n1 2\n255\n" + bytes(6)


# --- CLI -----------------------------------------------------------------------


def _demo(name):
    return str(DEMO_DIR / name)


def _solve_args(method, prefix="demo", *extra):
    return ["solve", "--method", method, "--mu", _demo(f"{prefix}_mu.txt"), "--nu", _demo(f"{prefix}_nu.txt"),
            "--cost", _demo(f"{prefix}_cost.txt"), *extra]


def test_cli_solve_exact_demo(capsys):
    assert main(_solve_args("exact")) == 0
    out = capsys.readouterr().out
    assert out.splitlines()[0] == "distance 1.0"


def test_cli_solve_one_point(tmp_path):
    plan = tmp_path / "plan.txt"
    assert main(_solve_args("ipot", "point", "--out-plan", str(plan))) == 0
    assert float(plan.read_text()) == 1


def test_cli_missing_cost(capsys):
    args = ["solve", "--method", "exact", "--mu", _demo("demo_mu.txt"), "--nu", _demo("demo_nu.txt")]
    with pytest.raises(SystemExit) as e:
        main(args)
    assert e.value.code == 1
    assert "usage" in capsys.readouterr().err


def test_cli_bad_file(tmp_path):
    bad = tmp_path / "bad.txt"
    bad.write_text("a b\n")
    args = ["solve", "--method", "exact", "--mu", str(bad), "--nu", _demo("demo_nu.txt"), "--cost",
            _demo("demo_cost.txt")]
    assert main(args) == 1


def test_cli_max_iters_exit_code():
    assert main(_solve_args("ipot", "demo", "--max-iters", "2", "--check-every", "1")) == 2


def test_cli_sinkhorn_needs_eps():
    assert main(_solve_args("sinkhorn")) == 1


def test_cli_deterministic(tmp_path, monkeypatch):
    monkeypatch.setenv("OT_THREADS", "0")
    outs = []
    for k in range(2):
        plan = tmp_path / f"plan{k}.txt"
        trace = tmp_path / f"trace{k}.csv"
        assert main(_solve_args("ipot", "demo", "--out-plan", str(plan), "--out-trace", str(trace))) == 0
        # wall times differ between runs; everything else must not
        rows = [r.split(",")[:3] + r.split(",")[4:] for r in trace.read_text().splitlines()]
        outs.append((plan.read_bytes(), rows))
    assert outs[0] == outs[1]


def test_cli_trace_matches_distance(tmp_path, capsys):
    trace = tmp_path / "trace.csv"
    assert main(_solve_args("ipot", "demo", "--out-trace", str(trace))) == 0
    dist = float(capsys.readouterr().out.split()[1])
    assert read_trace_csv(trace).cost[-1] == dist


def test_cli_color_transfer(tmp_path):
    src = ex.synthetic_image(8, seed=0)
    write_ppm(tmp_path / "s.ppm", src)
    assert main(["color-transfer", "--src", str(tmp_path / "s.ppm"), "--ref", str(tmp_path / "s.ppm"),
                 "--out", str(tmp_path / "o.ppm"), "--method", "exact"]) == 0
    assert (tmp_path / "o.ppm").read_bytes() == (tmp_path / "s.ppm").read_bytes()


# --- experiments -------------------------------------------------------------


def test_time_to_precision():
    tr = SolveTrace()
    for t, c in enumerate([2.0, 1.5, 1.00001, 1.0], 1):
        tr.append(t, c, 0.0, 0.1 * t)
    assert ex.time_to_precision(tr, 1.0, 1e-4) == pytest.approx(0.3)
    assert np.isnan(ex.time_to_precision(tr, 5.0, 1e-4))


def test_gauss1d_problem():
    mu, nu, C, x = ex.gauss1d_problem()
    assert mu.size == nu.size == 100 and x[0] == 1 and x[-1] == 100
    assert C.max() == 1.0
    # mean of the first mixture is 0.4 * 60 + 0.6 * 40
    assert np.dot(mu, x) == pytest.approx(48.0, abs=0.05)


def test_bench_gauss1d_writes_traces(tmp_path):
    res = ex.bench_gauss1d(tmp_path, inner=(1,), eps_rel=(0.1,), max_iters=200)
    names = {p.name for p in tmp_path.iterdir()}
    assert {"gauss1d_ipot_L1.csv", "gauss1d_sinkhorn_eps0.1.csv"} <= names
    for f in tmp_path.glob("*.csv"):
        assert f.read_text().splitlines()[0].endswith("abs_gap")
    assert res.rel_error("sinkhorn_eps0.1") > 1e-3


def test_bench_scaling_small(tmp_path):
    # small instances at eps = 0.01 max(C) can take 1e5+ Sinkhorn sweeps; this checks plumbing only
    rows = ex.bench_scaling(sizes=(16,), seeds=range(2), eps_rel=0.1, out_csv=tmp_path / "s.csv")
    assert [r[1] for r in rows] == ["ipot", "sinkhorn", "sinkhorn-log", "exact"]
    assert all(r[3] == 2 for r in rows)
    assert (tmp_path / "s.csv").read_text().splitlines()[0] == "n,method,seconds,seeds_reached"


def test_color_self_transfer_identity():
    img = ex.synthetic_image(16, seed=2)
    for method in ("exact", "ipot"):
        assert np.array_equal(ex.color_transfer(img, img, method).pixels, img.pixels)


def test_color_black_to_white():
    black = PpmImage.from_array(np.zeros((4, 4, 3), dtype=np.uint8))
    white = PpmImage.from_array(np.full((4, 4, 3), 255, dtype=np.uint8))
    for method in ("exact", "ipot"):
        assert np.all(ex.color_transfer(black, white, method).pixels == 255)


def test_channel_map_unpopulated_bins():
    src = np.zeros(256)
    src[[10, 20]] = [1, 1]
    ref = np.zeros(256)
    ref[[100, 200]] = [1, 1]
    lut = ex.channel_map(src, ref, "exact")
    assert lut[10] == 100 and lut[20] == 200
    assert lut[0] == 100 and lut[15] == 100 and lut[16] == 200 and lut[255] == 200


def test_color_transfer_moves_palette():
    src = ex.synthetic_image(16, seed=0)
    ref = ex.synthetic_image(16, seed=1, tint=(1.0, 0.6, 0.3))
    out = ex.color_transfer(src, ref, "exact")
    for ch in range(3):
        assert abs(out.pixels[..., ch].mean() - ref.pixels[..., ch].mean()) < \
            abs(src.pixels[..., ch].mean() - ref.pixels[..., ch].mean()) + 1


def test_uniform_instance_exact_vs_ipot():
    mu, nu, C = ex.uniform_instance(20, 4, seed=0)
    w = exact_ot(mu, nu, C).distance
    rep = ipot(mu, nu, C, IpotConfig(beta=0.05 * C.max(), max_outer_iters=5000))
    assert abs(rep.distance - w) / w <= 1e-6
