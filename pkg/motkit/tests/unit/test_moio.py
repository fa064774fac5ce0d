import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from motkit.core.boxes import BoundingBox, SceneKind
from motkit.core.exceptions import DataError
from motkit.core.motion import WarpMatrix
from motkit.core.sim import SimConfig, generate
from motkit.moio.files import (
    DET_DIR,
    GT_FILE,
    HEIGHTS_FILE,
    SEQINFO,
    WARPS_FILE,
    find_sequences,
    load_sequence,
    parse_detections,
    parse_ground_truth,
    parse_height_samples,
    parse_interpolated,
    parse_seqinfo,
    parse_tracks,
    parse_warps,
    write_detections,
    write_interpolated,
    write_seqinfo,
    write_sequence,
    write_tracks,
    write_warps,
)
from motkit.tests.common_values import MOCK_GT_TEXT, MOCK_SEQINFO_TEXT, walking_track


class DetectionFileTestCase(SimpleTestCase):
    def test_parse(self):
        dets = parse_detections(
            "2,-1,11,21,50,130,0.9\n1,-1,1,1,10,20,0.5,-1,-1,-1\n1,-1,101,1,10,20,0.7\n"
        )
        self.assertEqual(list(dets), [1, 2])
        self.assertEqual(dets[1][0], BoundingBox(0, 0, 10, 20, score=0.5, frame=1))
        self.assertEqual([det.score for det in dets[1]], [0.5, 0.7])
        self.assertEqual(dets[2][0].x, 10.0)

    def test_skips_empty_boxes_and_clamps_scores(self):
        with self.assertLogs("motkit.moio.files", level="WARNING") as logs:
            dets = parse_detections(
                "1,-1,1,1,0,20,0.5\n1,-1,1,1,10,20,1.7\n1,-1,1,1,10,20,-3\n"
            )
        self.assertEqual([det.score for det in dets[1]], [1.0, 0.0])
        self.assertEqual(len(logs.output), 2)

    def test_rejects_bad_rows(self):
        for text in (
            "1,-1,1,1,10\n",
            "1,-1,a,1,10,20,0.5\n",
            "0,-1,1,1,10,20,0.5\n",
            "1.5,-1,1,1,10,20,0.5\n",
        ):
            with self.assertRaises(DataError, msg=text):
                parse_detections(text)

    def test_error_names_source_and_line(self):
        with self.assertRaisesRegex(DataError, r"det.txt:2"):
            parse_detections("1,-1,1,1,10,20,0.5\n1,-1\n", source="det.txt")

    def test_write_is_one_based(self):
        text = write_detections({3: [BoundingBox(0, 9.5, 10, 20, score=0.25, frame=3)]})
        self.assertEqual(text, "3,-1,1.00,10.50,10.00,20.00,0.25,-1,-1,-1\n")


class TrackFileTestCase(SimpleTestCase):
    def test_write_orders_by_frame_then_id(self):
        text = write_tracks(
            [
                walking_track(2, 1, 2, x=0.0, y=0.0),
                walking_track(1, 2, 2, x=10.0, y=0.0),
            ]
        )
        self.assertEqual(
            text.splitlines(),
            [
                "1,2,1.00,1.00,50.00,130.00,0.90,-1,-1,-1",
                "2,1,11.00,1.00,50.00,130.00,0.90,-1,-1,-1",
                "2,2,3.00,1.00,50.00,130.00,0.90,-1,-1,-1",
            ],
        )

    def test_read_back(self):
        tracks = [walking_track(1, 1, 5), walking_track(4, 3, 9, x=700.0)]
        parsed = parse_tracks(write_tracks(tracks))
        self.assertEqual([track.id for track in parsed], [1, 4])
        for original, read in zip(tracks, parsed):
            self.assertEqual(read.frames, original.frames)
            np.testing.assert_allclose(read.last_box.tlwh, original.last_box.tlwh)

    def test_duplicate_frame(self):
        with self.assertRaises(DataError):
            parse_tracks("1,1,1,1,10,20,1\n1,1,5,5,10,20,1\n")

    def test_interpolated_boxes_listed_apart(self):
        track = walking_track(1, 1, 3)
        track.add(
            BoundingBox(
                106.0, 200.0, 50.0, 130.0, score=0.9, frame=4, interpolated=True
            )
        )
        text = write_tracks([track])
        self.assertEqual(
            text.splitlines()[-1], "4,1,107.00,201.00,50.00,130.00,0.90,-1,-1,-1"
        )
        keys = write_interpolated([track])
        self.assertEqual(keys, "4,1\n")
        parsed = parse_tracks(text, interpolated=parse_interpolated(keys))[0]
        self.assertEqual(
            [box.interpolated for box in parsed], [False, False, False, True]
        )
        self.assertFalse(any(box.interpolated for box in parse_tracks(text)[0]))

    def test_interpolated_keys(self):
        self.assertEqual(parse_interpolated("3,2\n\n1,7\n"), {(3, 2), (1, 7)})
        self.assertEqual(write_interpolated([walking_track(1, 1, 3)]), "")
        for text in ("0,1\n", "2\n", "a,1\n"):
            with self.assertRaises(DataError, msg=text):
                parse_interpolated(text)


class GroundTruthFileTestCase(SimpleTestCase):
    def test_parse_columns(self):
        rows = parse_ground_truth(MOCK_GT_TEXT)
        self.assertEqual(len(rows), 6)
        self.assertEqual(rows[2].visibility, 0.8)
        self.assertEqual(rows[5].flag, 0)
        self.assertEqual(rows[0].box, BoundingBox(99, 199, 50, 130, frame=1))

    def test_missing_columns_mean_visible_pedestrian(self):
        row = parse_ground_truth("1,3,1,1,10,20\n")[0]
        self.assertEqual(
            (row.track_id, row.flag, row.cls, row.visibility), (3, 1, 1, 1.0)
        )


class SeqinfoTestCase(SimpleTestCase):
    def test_parse(self):
        meta = parse_seqinfo(MOCK_SEQINFO_TEXT, SceneKind.DYNAMIC)
        self.assertEqual(
            (meta.name, meta.width, meta.height, meta.fps, meta.length),
            ("MOCK-01", 1920, 1080, 30.0, 100),
        )
        self.assertTrue(meta.is_dynamic)

    def test_written_seqinfo_reads_back(self):
        meta = parse_seqinfo(MOCK_SEQINFO_TEXT)
        self.assertEqual(parse_seqinfo(write_seqinfo(meta)), meta)

    def test_missing_key(self):
        with self.assertRaisesRegex(DataError, "seqlength"):
            parse_seqinfo(MOCK_SEQINFO_TEXT.replace("seqLength=100\n", ""))

    def test_invalid_value(self):
        with self.assertRaises(DataError):
            parse_seqinfo(MOCK_SEQINFO_TEXT.replace("imWidth=1920", "imWidth=wide"))

    def test_missing_section(self):
        with self.assertRaises(DataError):
            parse_seqinfo("name=MOCK-01\n")

    def test_unknown_key_logged(self):
        with self.assertLogs("motkit.moio.files", level="WARNING"):
            parse_seqinfo(MOCK_SEQINFO_TEXT + "camera=moving\n")


class WarpFileTestCase(SimpleTestCase):
    def test_parse(self):
        warps = parse_warps(
            "# frame a11 a12 a13 a21 a22 a23\n2 1 0 -4 0 1 0.5\n\n3 1 0 -4 0 1 0.5\n"
        )
        self.assertEqual(sorted(warps), [2, 3])
        np.testing.assert_allclose(warps[2].translation, [-4.0, 0.5])

    def test_written_warps_read_back(self):
        warps = {
            2: WarpMatrix.translation_only(2, -4.0, 1.0),
            5: WarpMatrix(5, [[0.0, -1.0, 3.0], [1.0, 0.0, 2.0]]),
        }
        parsed = parse_warps(write_warps(warps))
        for frame, warp in warps.items():
            np.testing.assert_allclose(parsed[frame].matrix, warp.matrix)

    def test_rejects_bad_lines(self):
        for text in (
            "2 1 0 0 0 1\n",
            "2 1 0 0 0 1 x\n",
            "2 1 0 0 0 1 0\n2 1 0 0 0 1 0\n",
            "2 0 0 0 0 0 0\n",
        ):
            with self.assertRaises(DataError, msg=text):
                parse_warps(text)


class HeightSampleFileTestCase(SimpleTestCase):
    def test_parse(self):
        self.assertEqual(
            parse_height_samples("# y h\n101 150\n\n201 175.5\n"),
            [(100.0, 150.0), (200.0, 175.5)],
        )

    def test_rejects_bad_lines(self):
        for text in ("100\n", "100 tall\n", "100 0\n"):
            with self.assertRaises(DataError, msg=text):
                parse_height_samples(text)


class SequenceDirectoryTestCase(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.root = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def test_write_and_load_simulated_sequence(self):
        sequence = generate(
            SimConfig(
                name="SIM-07", n_tracks=3, length=40, camera_pan=(3.0, 0.0), seed=1
            )
        )
        path = write_sequence(self.root, sequence)
        self.assertEqual(path, self.root / "SIM-07")
        files = load_sequence(path)
        self.assertEqual(files.name, "SIM-07")
        self.assertEqual(len(files.primary_detections), len(sequence.dets))
        self.assertEqual(len({row.track_id for row in files.annotations}), 3)
        self.assertEqual(sorted(files.warps), list(range(2, 41)))
        self.assertIn("scene_kind = dynamic", files.config_text)
        self.assertEqual(
            set(files.inputs),
            {SEQINFO, f"{DET_DIR}/det.txt", GT_FILE, WARPS_FILE, "motkit.cfg"},
        )
        self.assertIsNone(files.height_samples)

    def test_optional_files(self):
        path = self.root / "MOCK-01"
        (path / DET_DIR).mkdir(parents=True)
        (path / SEQINFO).write_text(MOCK_SEQINFO_TEXT)
        (path / DET_DIR / "det.txt").write_text("1,-1,1,1,10,20,0.9\n")
        (path / DET_DIR / "yolox.txt").write_text("1,-1,1,1,10,20,0.8\n")
        (path / HEIGHTS_FILE).write_text("101 150\n")
        files = load_sequence(path)
        self.assertIsNone(files.annotations)
        self.assertEqual(files.warps, {})
        self.assertEqual(sorted(files.detections), ["det.txt", "yolox.txt"])
        self.assertEqual(files.primary_detections[1][0].score, 0.9)
        self.assertEqual(files.height_samples, [(100.0, 150.0)])

    def test_no_detections(self):
        path = self.root / "MOCK-01"
        path.mkdir()
        (path / SEQINFO).write_text(MOCK_SEQINFO_TEXT)
        with self.assertRaises(DataError):
            load_sequence(path)

    def test_find_sequences(self):
        for name in ("B-02", "A-01"):
            (self.root / "set" / name).mkdir(parents=True)
            (self.root / "set" / name / SEQINFO).write_text(MOCK_SEQINFO_TEXT)
        (self.root / "set" / "notes").mkdir()
        found = find_sequences([self.root / "set"])
        self.assertEqual([path.name for path in found], ["A-01", "B-02"])
        self.assertEqual(
            find_sequences([self.root / "set" / "B-02"]), [self.root / "set" / "B-02"]
        )
        with self.assertRaises(DataError):
            find_sequences([self.root / "missing"])
