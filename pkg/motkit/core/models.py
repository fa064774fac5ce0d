import json
from pathlib import Path
from typing import Optional

from django.core.serializers.json import DjangoJSONEncoder
from django.db import models

from motkit.moio.types import ManifestPayload

MANIFEST_FILE = "manifest.json"


class RunManifest(models.Model):
    """
    One command run: its resolved config, the keys that fell back to defaults,
    digests of every input and output file, and the report it produced.
    """

    command = models.CharField(max_length=32, db_index=True)
    arguments = models.JSONField(default=list, encoder=DjangoJSONEncoder)
    config = models.JSONField(default=dict, encoder=DjangoJSONEncoder)
    defaults_applied = models.JSONField(default=list)
    inputs = models.JSONField(default=dict)
    outputs = models.JSONField(default=dict)
    report = models.JSONField(null=True, blank=True, encoder=DjangoJSONEncoder)
    exit_code = models.PositiveSmallIntegerField(default=0)
    created_at = models.DateTimeField(auto_now_add=True, db_index=True)

    class Meta:
        ordering = ["-created_at"]

    def __str__(self) -> str:
        return f"{self.command} #{self.pk} ({self.created_at:%Y-%m-%d %H:%M})"

    def payload(self) -> ManifestPayload:
        return ManifestPayload(
            command=self.command,
            arguments=self.arguments,
            config=self.config,
            defaults_applied=self.defaults_applied,
            inputs=self.inputs,
            outputs=self.outputs,
            report=self.report,
        )

    def write(self, out_dir: Optional[Path]) -> Optional[Path]:
        """ Write manifest.json into out_dir, if there is one. """
        if out_dir is None:
            return None
        path = Path(out_dir) / MANIFEST_FILE
        path.parent.mkdir(parents=True, exist_ok=True)
        text = json.dumps(
            self.payload(), cls=DjangoJSONEncoder, indent=2, sort_keys=True
        )
        path.write_text(text + "\n")
        return path
