import json
import tempfile
from datetime import timedelta
from pathlib import Path

from django.test import TestCase
from faker import Faker

from motkit.core.models import MANIFEST_FILE, RunManifest


class RunManifestTestCase(TestCase):
    def setUp(self):
        self.faker = Faker()
        self.manifest = RunManifest.objects.create(
            command="track",
            arguments=[f"out={self.faker.file_path(depth=2)}", "merge=False"],
            config={
                "tracker.high_thresh": 0.6, "postprocess.steps": ["merge", "prune"]
            },
            defaults_applied=["tracker.low_thresh"],
            inputs={"SIM-00/det/det.txt": self.faker.sha256()},
            outputs={"SIM-00.txt": self.faker.sha256()},
        )

    def test_write(self):
        with tempfile.TemporaryDirectory() as tmp:
            out_dir = Path(tmp) / "nested" / "out"
            path = self.manifest.write(out_dir)
            self.assertEqual(path, out_dir / MANIFEST_FILE)
            written = json.loads(path.read_text())
        self.assertEqual(written, json.loads(json.dumps(self.manifest.payload())))
        self.assertEqual(written["config"]["postprocess.steps"], ["merge", "prune"])
        self.assertIsNone(written["report"])

    def test_write_without_out_dir(self):
        self.assertIsNone(self.manifest.write(None))

    def test_stored(self):
        stored = RunManifest.objects.get(pk=self.manifest.pk)
        self.assertEqual(stored.exit_code, 0)
        self.assertEqual(stored.outputs, self.manifest.outputs)
        self.assertTrue(str(stored).startswith(f"track #{stored.pk} "))

    def test_newest_first(self):
        later = RunManifest.objects.create(command="eval", exit_code=2)
        RunManifest.objects.filter(pk=later.pk).update(
            created_at=self.manifest.created_at + timedelta(seconds=1)
        )
        self.assertEqual(RunManifest.objects.first(), later)
