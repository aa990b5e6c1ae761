from pathlib import Path
from typing import Union

from siamprint.constants import MANIFEST_FILE, MANIFEST_FORMAT_VERSION
from siamprint.core.exceptions import DataIOError
from siamprint.schemas.dataset import DatasetManifest
from siamprint.schemas.metrics import MetricsReport
from siamprint.storage.base import JSONDocumentStore


class ManifestStore(JSONDocumentStore[DatasetManifest]):

    def manifest_path(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        return path / MANIFEST_FILE if path.is_dir() else path

    def read(self, path: Union[str, Path]) -> DatasetManifest:
        manifest = super().read(self.manifest_path(path))
        if manifest.format_version != MANIFEST_FORMAT_VERSION:
            raise DataIOError(
                f'Unsupported manifest format_version '
                f'{manifest.format_version}.'
            )
        return manifest

    def root(self, path: Union[str, Path]) -> Path:
        return self.manifest_path(path).parent


manifest_store = ManifestStore(DatasetManifest)
report_store = JSONDocumentStore(MetricsReport)
