"""Carpet projection, measure rendering, box counting, and separation checks."""

from __future__ import annotations

import math

import numpy as np
import pytest

from carpetmf import (
    CapExceededError,
    CellSystem,
    ball_mass,
    birkhoff_average_on_carpet,
    box_count_tau,
    carpet_digits,
    check_P1,
    check_P2,
    check_P3,
    depth_map,
    lq_spectrum_empirical,
    make_constant_cell,
    normalize_to_gibbs,
    p3_scan,
    project_numerators,
    project_point,
    render_measure,
    sample_path,
    write_grid_csv,
    write_pgm16,
)

P3_REFERENCE_DEFECT = 0.31365755885504143  # log(0.13 / 0.095)


# -- projection ------------------------------------------------------------------


def test_project_point_examples(ref_system):
    assert project_point(ref_system, [(0, 0)]) == (0.0, 0.0)
    assert project_point(ref_system, [(1, 3)]) == (0.5, 0.75)
    assert project_point(ref_system, [(1, 3), (1, 3)]) == (0.75, 0.9375)


def test_project_numerators_geometric(ref_system):
    # constant digits (1, 2): x = sum 2^-k has numerator 2^p - 1 and
    # y = sum 2 * 4^-k has numerator 2 (4^p - 1) / 3, exactly
    for p in (1, 5, 30, 80):
        cells = [(1, 2)] * p
        x_num, y_num, depth = project_numerators(ref_system, cells)
        assert depth == p
        assert x_num == 2**p - 1
        assert y_num == 2 * (4**p - 1) // 3


def test_project_point_truncation_bound(ref_system, ref_weight):
    path = sample_path(ref_weight, 20, master_seed=6, sample_index=0, record_masses=False)
    x_full, y_full = project_point(ref_system, path)
    for p in (5, 10, 15):
        x_p, y_p = project_point(ref_system, path, precision=p)
        assert 0.0 <= x_full - x_p < 2.0**-p
        assert 0.0 <= y_full - y_p < 4.0**-p


def test_project_precision_validated(ref_system):
    with pytest.raises(ValueError):
        project_numerators(ref_system, [(0, 0)], precision=2)
    with pytest.raises(ValueError):
        project_numerators(ref_system, [(0, 0)], precision=-1)
    with pytest.raises(ValueError):
        project_numerators(ref_system, np.zeros((3, 3), dtype=np.int64))


def test_digit_round_trip_depth30(ref_system, ref_weight):
    path = sample_path(ref_weight, 30, master_seed=8, sample_index=4, record_masses=False)
    x_num, y_num, p = project_numerators(ref_system, path)
    recovered = carpet_digits(ref_system, x_num, y_num, p, 30)
    assert np.array_equal(recovered, path.cells)
    with pytest.raises(ValueError):
        carpet_digits(ref_system, x_num, y_num, p, 31)


def test_birkhoff_average_on_carpet(ref_weight, ref_masses):
    path = sample_path(ref_weight, 25, master_seed=12, sample_index=0, record_masses=False)
    got = birkhoff_average_on_carpet(ref_weight, path)
    by_hand = np.mean(
        [math.log(ref_masses[tuple(int(x) for x in cell)]) for cell in path.cells]
    )
    assert got == pytest.approx(float(by_hand), abs=1e-12)
    assert got == pytest.approx(path.birkhoff[-1] / 25, abs=1e-12)
    # truncated-step variant averages the first few digits only
    first5 = birkhoff_average_on_carpet(ref_weight, path, steps=5)
    assert first5 == pytest.approx(path.birkhoff[4] / 5, abs=1e-12)


def test_birkhoff_average_depth2_window(depth2_weight, ref_weight):
    # a depth-2 window needs steps + 1 cells; the average is the window
    # log-weight of the recovered digits over the step count
    path = sample_path(ref_weight, 10, master_seed=14, sample_index=1, record_masses=False)
    got = birkhoff_average_on_carpet(depth2_weight, path, steps=9)
    want = depth2_weight.log_weight([tuple(int(x) for x in c) for c in path.cells]) / 9
    assert got == pytest.approx(want, abs=1e-12)
    with pytest.raises(ValueError):
        birkhoff_average_on_carpet(depth2_weight, path, steps=10)


# -- rendering -----------------------------------------------------------------------


def test_render_matches_ball_masses(ref_weight, ref_system):
    n = 2
    render = render_measure(ref_weight, n)
    g = depth_map(ref_system, n)
    assert render.column_depth == g
    assert render.column_count == 2**g and render.row_count == 4**n
    for col in range(render.column_count):
        w1 = [(col >> k) & 1 for k in range(g - 1, -1, -1)]
        for row in range(render.row_count):
            w2 = [(row >> (2 * k)) & 3 for k in range(n - 1, -1, -1)]
            want = ball_mass(ref_weight, w1, w2)
            got = render.log_masses[col, row]
            if math.isinf(want):
                assert math.isinf(got)
            else:
                assert got == pytest.approx(want, abs=1e-12)


def test_render_total_mass(ref_weight):
    for n in (1, 2, 3):
        assert render_measure(ref_weight, n).total_log_mass() == pytest.approx(
            0.0, abs=1e-9
        )


def test_render_workers_agree(ref_weight):
    one = render_measure(ref_weight, 3, workers=1)
    four = render_measure(ref_weight, 3, workers=4)
    assert np.array_equal(one.log_masses, four.log_masses)


def test_render_cap(ref_weight):
    with pytest.raises(CapExceededError):
        render_measure(ref_weight, 6, cap=2**10)


def test_render_uniform_full_grid(tmp_path):
    # every cell of the full 2 x 4 alphabet charged with equal mass: the
    # graymap saturates all pixels at 65535
    sys_ = CellSystem(2, 4, tuple((a1, a2) for a1 in range(2) for a2 in range(4)))
    psi = normalize_to_gibbs(make_constant_cell(sys_, 1, np.zeros(8)), math.log(8))
    render = render_measure(psi, 1)
    assert np.all(np.isfinite(render.log_masses))
    np.testing.assert_allclose(render.log_masses, render.log_masses[0, 0], atol=1e-12)
    out = write_pgm16(render, tmp_path / "uniform.pgm")
    _, _, _, pixels = parse_pgm(out)
    assert np.all(pixels == 65535)


def test_render_single_column_system():
    sys_ = CellSystem(2, 4, ((0, 0), (0, 1)))
    psi = normalize_to_gibbs(make_constant_cell(sys_, 1, np.zeros(2)), math.log(2))
    render = render_measure(psi, 2)
    charged_cols = np.isfinite(render.log_masses).any(axis=1)
    assert charged_cols[0] and not charged_cols[1:].any()


def test_rendered_histogram_matches_sampler(ref_weight, ref_system):
    # 40000 iid depth-6 windows cut from 2500 sampled paths; the empirical
    # depth-3 ball histogram tracks the rendered masses within four sigma
    # cell by cell, and never charges an empty cell.
    paths = [
        sample_path(ref_weight, 96, master_seed=17, sample_index=i, record_masses=False)
        for i in range(2500)
    ]
    wins = np.concatenate([p.cells.reshape(16, 6, 2) for p in paths])
    render = render_measure(ref_weight, 3)
    g3 = depth_map(ref_system, 3)
    col_idx = np.zeros(len(wins), dtype=np.int64)
    for k in range(g3):
        col_idx = col_idx * 2 + wins[:, k, 0]
    row_idx = np.zeros(len(wins), dtype=np.int64)
    for k in range(3):
        row_idx = row_idx * 4 + wins[:, k, 1]
    flat = col_idx * render.row_count + row_idx
    counts = np.bincount(flat, minlength=render.column_count * render.row_count)
    probs = np.exp(render.log_masses).ravel()
    charged = probs > 0
    n = len(wins)
    z = np.abs(counts[charged] - n * probs[charged]) / np.sqrt(
        n * probs[charged] * (1 - probs[charged])
    )
    assert charged.sum() == 5**3 * 2**3
    assert float(z.max()) <= 4.0
    assert counts[~charged].sum() == 0


# -- file formats ---------------------------------------------------------------------


def parse_pgm(path):
    data = path.read_bytes()
    assert data.startswith(b"P5\n")
    pos = 3
    comments = []
    while data[pos : pos + 1] == b"#":
        end = data.index(b"\n", pos)
        comments.append(data[pos:end].decode())
        pos = end + 1
    end = data.index(b"\n", pos)
    width, height = map(int, data[pos:end].split())
    pos = end + 1
    end = data.index(b"\n", pos)
    maxval = int(data[pos:end])
    raw = data[end + 1 :]
    assert len(raw) == width * height * 2
    pixels = np.frombuffer(raw, dtype=">u2").reshape(height, width)
    return comments, width, height, pixels


def test_pgm_format_round_trip(ref_weight, ref_system, tmp_path):
    n = 2
    render = render_measure(ref_weight, n)
    out = write_pgm16(render, tmp_path / "render_n2.pgm", comments=["demo"])
    comments, width, height, pixels = parse_pgm(out)
    assert width == 2 ** depth_map(ref_system, n)
    assert height == 4**n
    assert any("origin: bottom-left" in c for c in comments)
    assert any("demo" in c for c in comments)
    grid = render.log_masses
    finite = np.isfinite(grid)
    # bottom-left origin: image row 0 is the top, grid row index increases up
    image_view = pixels[::-1, :].T
    assert np.array_equal(image_view == 0, ~finite)
    lo, hi = grid[finite].min(), grid[finite].max()
    assert image_view[grid == lo].min() == 1
    assert image_view[grid == hi].max() == 65535
    # affine map: gray = 1 + (mass - lo) * 65534 / (hi - lo), rounded
    want = np.round(1.0 + (grid[finite] - lo) * (65534.0 / (hi - lo)))
    assert np.array_equal(image_view[finite].astype(float), want)


def test_grid_csv_round_trip(ref_weight, tmp_path):
    render = render_measure(ref_weight, 2)
    out = write_grid_csv(render, tmp_path / "render_n2.csv", comments=["demo"])
    lines = out.read_text().splitlines()
    assert lines[0] == "# demo"
    body = [ln for ln in lines if not ln.startswith("#")]
    assert body[0] == "columnIndex,rowIndex,logMass"
    finite = np.isfinite(render.log_masses)
    assert len(body) - 1 == int(finite.sum())
    for ln in body[1:]:
        c, r, lm = ln.split(",")
        assert float(lm) == render.log_masses[int(c), int(r)]


# -- box counting ---------------------------------------------------------------------


def test_box_count_normalized_q1(ref_weight):
    for n in (1, 2, 3):
        render = render_measure(ref_weight, n)
        assert box_count_tau(render, [1.0])[0] == pytest.approx(0.0, abs=1e-12)


def test_box_count_q0_counts_charged_cells(ref_weight):
    for n in (1, 2):
        render = render_measure(ref_weight, n)
        want = -math.log(5**n * 2**n) / (n * math.log(4))
        assert box_count_tau(render, [0.0])[0] == pytest.approx(want, abs=1e-12)


def test_box_count_matches_moment_spectrum(ref_weight):
    render = render_measure(ref_weight, 3)
    qs = (0.5, 1.0, 2.0, 3.0)
    got = box_count_tau(render, qs)
    for q, value in zip(qs, got):
        assert value == pytest.approx(lq_spectrum_empirical(ref_weight, q, 3), rel=1e-12)


def test_box_count_depth_stability(ref_weight):
    # depth-1 weights scale exactly, so two depths agree far inside the
    # coarse 0.05 stability band
    t3 = lq_spectrum_empirical(ref_weight, 2.0, 3)
    t5 = lq_spectrum_empirical(ref_weight, 2.0, 5)
    assert abs(t3 - t5) <= 0.05


def test_box_count_empty_render():
    sys_ = CellSystem(3, 3, ((0, 0), (2, 1)))
    psi = make_constant_cell(sys_, 1, {((0, 0),): -1.0, ((2, 1),): -2.0})
    render = render_measure(psi, 1)
    # charged cells only contribute; uncharged q = 0 count excludes them
    count = np.isfinite(render.log_masses).sum()
    assert box_count_tau(render, [0.0])[0] == pytest.approx(
        -math.log(count) / math.log(3), abs=1e-12
    )


# -- separation predicates ------------------------------------------------------------


def test_p1_examples(ref_system):
    assert check_P1(CellSystem(3, 3, ((0, 0), (2, 1)))) is True
    assert check_P1(CellSystem(3, 3, ((0, 0), (1, 1)))) is False
    assert check_P1(ref_system) is False


def test_p2_examples(ref_system):
    assert check_P2(CellSystem(3, 3, ((0, 0), (1, 1)))) is True
    assert check_P2(CellSystem(3, 3, ((0, 0), (2, 1)))) is False
    assert check_P2(ref_system) is False


def test_p3_symmetric_rows_exact():
    sys_ = CellSystem(2, 4, ((0, 0), (0, 1), (1, 0), (1, 1)))
    psi = make_constant_cell(sys_, 1, np.zeros(4))
    holds, defect = check_P3(sys_, psi)
    assert holds is True
    assert defect == 0.0


def test_p3_reference_defect(ref_weight, ref_system):
    report = p3_scan(ref_system, ref_weight)
    assert report.subset_holds is True
    assert not report.holds
    assert report.terminal_defect == pytest.approx(P3_REFERENCE_DEFECT, abs=1e-12)
    # depth-1 weights have depth-independent defects
    for d in report.defects:
        assert d == pytest.approx(P3_REFERENCE_DEFECT, abs=1e-12)
    assert report.depths == (2, 4, 6, 8)


def test_p3_missing_boundary_letter():
    sys_ = CellSystem(3, 3, ((0, 0), (1, 1)))
    psi = make_constant_cell(sys_, 1, np.zeros(2))
    report = p3_scan(sys_, psi)
    assert report.subset_holds is False
    assert not report.holds
    assert math.isinf(report.terminal_defect)


def test_p3_scan_validation(ref_weight, ref_system):
    with pytest.raises(ValueError):
        p3_scan(ref_system, ref_weight, q_set=(0.0, 1.0))
    with pytest.raises(ValueError):
        p3_scan(ref_system, ref_weight, q_set=(-1.0,))
    with pytest.raises(ValueError):
        p3_scan(ref_system, ref_weight, depth_schedule=(4, 2))
    with pytest.raises(ValueError):
        p3_scan(ref_system, ref_weight, depth_schedule=())
