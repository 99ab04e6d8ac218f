import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from inklab import ingest
from inklab.errors import (
    CountMismatch,
    DataError,
    EmptyFile,
    EmptyTrajectory,
    MalformedLine,
    NonMonotoneTime,
)
from inklab.ingest import (
    ColumnMap,
    StrokeKind,
    Trajectory,
    normalize_coords,
    parse_svc,
    segment_strokes,
    write_svc,
)

# x, y, t, button, azimuth, altitude, pressure in file order
XY_FIRST = ColumnMap(("x", "y", "t", "button", "azimuth", "altitude", "pressure"))


def make_traj(x, y, button=None, t=None, pressure=None, **kw):
    n = len(x)
    return Trajectory(
        x=np.asarray(x, dtype=np.int64),
        y=np.asarray(y, dtype=np.int64),
        t=np.asarray(t if t is not None else np.arange(n), dtype=np.int64),
        button=np.asarray(button if button is not None else np.ones(n), dtype=np.int64),
        azimuth=np.full(n, 900, dtype=np.int64),
        altitude=np.full(n, 500, dtype=np.int64),
        pressure=np.asarray(pressure if pressure is not None else np.full(n, 300),
                            dtype=np.int64),
        **kw,
    )


class TestParseSvc:
    def test_two_samples_with_header(self):
        text = "2\n10 20 0 1 900 500 300\n11 21 1 1 900 500 310\n"
        traj = parse_svc(text, column_map=XY_FIRST, subject_id="s1", task_id=2)
        assert len(traj) == 2
        assert traj.x.tolist() == [10, 11]
        assert traj.y.tolist() == [20, 21]
        assert traj.t.tolist() == [0, 1]
        assert traj.button.tolist() == [1, 1]
        assert traj.pressure.tolist() == [300, 310]
        strokes = segment_strokes(traj)
        assert len(strokes) == 1 and strokes[0].kind == StrokeKind.ON_SURFACE

    def test_default_column_map_swaps_xy(self):
        traj = parse_svc("20 10 0 1 900 500 300\n")
        assert traj.x.tolist() == [10] and traj.y.tolist() == [20]

    def test_empty_file(self):
        with pytest.raises(EmptyFile):
            parse_svc("")
        with pytest.raises(EmptyFile):
            parse_svc("\n  \n")

    def test_count_mismatch(self):
        text = "3\n10 20 0 1 900 500 300\n11 21 1 1 900 500 310\n"
        with pytest.raises(CountMismatch):
            parse_svc(text, column_map=XY_FIRST)

    def test_header_only_is_empty(self):
        with pytest.raises(EmptyFile):
            parse_svc("0\n")

    def test_malformed_line_number(self):
        text = "10 20 0 1 900 500 300\n11 21 1 1 900\n"
        with pytest.raises(MalformedLine) as exc:
            parse_svc(text, column_map=XY_FIRST)
        assert exc.value.line_no == 2

    def test_non_integer_token(self):
        with pytest.raises(MalformedLine):
            parse_svc("10 2.5 0 1 900 500 300\n", column_map=XY_FIRST)

    def test_bad_button_value(self):
        with pytest.raises(MalformedLine):
            parse_svc("10 20 0 2 900 500 300\n", column_map=XY_FIRST)

    def test_nonmonotone_time_warns_then_raises(self):
        text = "10 20 5 1 900 500 300\n11 21 4 1 900 500 300\n"
        with pytest.warns(ingest.NonMonotoneTimeWarning):
            traj = parse_svc(text, column_map=XY_FIRST)
        assert len(traj) == 2  # stable keep
        with pytest.raises(NonMonotoneTime):
            parse_svc(text, column_map=XY_FIRST, on_nonmonotone="raise")

    def test_label_carried_optionally(self):
        line = "10 20 0 1 900 500 300\n"
        assert parse_svc(line).label is None
        assert parse_svc(line, label="PD").label == "PD"
        with pytest.raises(DataError):
            make_traj([0], [0], label="sick")


class TestNormalize:
    def test_x_min_subtraction(self):
        traj = normalize_coords(make_traj([5, 7, 9], [0, 0, 0]))
        assert traj.x.tolist() == [0.0, 2.0, 4.0]

    def test_y_mean_subtraction(self):
        traj = normalize_coords(make_traj([0, 0, 0], [1, 2, 3]))
        assert traj.y.tolist() == [-1.0, 0.0, 1.0]

    def test_idempotent_fixed_point(self):
        once = normalize_coords(make_traj([5, 7, 9], [1, 2, 3]))
        twice = normalize_coords(once)
        np.testing.assert_array_equal(once.x, twice.x)
        np.testing.assert_array_equal(once.y, twice.y)

    def test_empty_rejected(self):
        with pytest.raises(EmptyTrajectory):
            normalize_coords(make_traj([], []))

    @given(st.lists(st.integers(-10000, 10000), min_size=1, max_size=200))
    def test_invariants_hold_for_any_input(self, values):
        traj = normalize_coords(make_traj(values, values[::-1]))
        assert traj.x.min() == 0.0
        assert abs(traj.y.mean()) < 1e-9
        # other channels untouched
        assert traj.pressure.tolist() == [300] * len(values)


class TestSegmentStrokes:
    def test_spec_example(self):
        strokes = segment_strokes(make_traj([0] * 5, [0] * 5, button=[1, 1, 0, 0, 1]))
        assert [(s.kind, s.start, s.stop) for s in strokes] == [
            (StrokeKind.ON_SURFACE, 0, 2),
            (StrokeKind.IN_AIR, 2, 4),
            (StrokeKind.ON_SURFACE, 4, 5),
        ]

    def test_all_down(self):
        strokes = segment_strokes(make_traj([0] * 4, [0] * 4, button=[1, 1, 1, 1]))
        assert len(strokes) == 1
        assert strokes[0].sample_range == range(0, 4)

    def test_alternating(self):
        strokes = segment_strokes(make_traj([0] * 4, [0] * 4, button=[1, 0, 1, 0]))
        assert [len(s) for s in strokes] == [1, 1, 1, 1]

    @given(st.lists(st.integers(0, 1), min_size=1, max_size=300))
    def test_partition_property(self, buttons):
        traj = make_traj([0] * len(buttons), [0] * len(buttons), button=buttons)
        strokes = segment_strokes(traj)
        assert sum(len(s) for s in strokes) == len(buttons)
        assert strokes[0].start == 0 and strokes[-1].stop == len(buttons)
        for a, b in zip(strokes, strokes[1:]):
            assert a.stop == b.start
            assert a.kind != b.kind  # adjacent strokes alternate
        for s in strokes:
            want = 1 if s.kind == StrokeKind.ON_SURFACE else 0
            assert all(buttons[i] == want for i in s.sample_range)


@st.composite
def svc_rows(draw):
    n = draw(st.integers(1, 60))
    coord = st.integers(0, 30000)
    rows = []
    t = 0
    for _ in range(n):
        t += draw(st.integers(0, 20))
        rows.append(
            (
                draw(coord),
                draw(coord),
                t,
                draw(st.integers(0, 1)),
                draw(st.integers(0, 3600)),
                draw(st.integers(0, 900)),
                draw(st.integers(0, 1024)),
            )
        )
    return rows


class TestRoundTrip:
    @settings(max_examples=50)
    @given(svc_rows(), st.booleans())
    def test_write_then_parse_identical(self, rows, header):
        arr = np.array(rows, dtype=np.int64)
        traj = make_traj(arr[:, 0], arr[:, 1], button=arr[:, 3], t=arr[:, 2],
                         pressure=arr[:, 6])
        cmap = ColumnMap()
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            again = parse_svc(write_svc(traj, cmap, include_header=header), cmap)
        for fieldname in ("x", "y", "t", "button", "pressure"):
            np.testing.assert_array_equal(
                getattr(traj, fieldname), getattr(again, fieldname), err_msg=fieldname
            )


class TestManifest:
    def test_write_scan_load(self, tmp_path):
        body = "10 20 0 1 900 500 300\n"
        records = []
        for subject in ("a01", "b02"):
            paths = {}
            for task in range(1, 9):
                p = tmp_path / ingest.task_filename(subject, task)
                p.write_text(body)
                paths[task] = p
            records.append(ingest.SubjectRecord(subject, "PD", paths))
        ingest.write_manifest(tmp_path / "manifest.json", records)

        loaded = ingest.load_manifest(tmp_path / "manifest.json")
        assert [r.subject_id for r in loaded] == ["a01", "b02"]
        assert loaded[0].label == "PD"
        traj = ingest.load_trajectory(loaded[0], 3)
        assert traj.subject_id == "a01" and traj.task_id == 3 and traj.label == "PD"

        scanned = ingest.scan_directory(tmp_path)
        assert [r.subject_id for r in scanned] == ["a01", "b02"]
        assert sorted(scanned[0].task_paths) == list(range(1, 9))
