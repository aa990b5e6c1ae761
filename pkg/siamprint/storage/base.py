import hashlib
from pathlib import Path
from typing import Generic, Type, TypeVar, Union

from pydantic import BaseModel, ValidationError

from siamprint.core.exceptions import DataIOError

SchemaType = TypeVar('SchemaType', bound=BaseModel)


class JSONDocumentStore(Generic[SchemaType]):

    def __init__(
        self,
        schema: Type[SchemaType],
    ):
        self.schema = schema

    def dumps(self, obj: SchemaType) -> str:
        return obj.json(indent=2, sort_keys=True)

    def write(
        self,
        obj: SchemaType,
        path: Union[str, Path],
    ) -> Path:
        path = Path(path)
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(self.dumps(obj) + '\n', encoding='utf-8')
        except OSError as error:
            raise DataIOError(f'Cannot write {path}: {error}.')
        return path

    def read(
        self,
        path: Union[str, Path],
    ) -> SchemaType:
        path = Path(path)
        try:
            return self.schema.parse_file(path)
        except OSError as error:
            raise DataIOError(f'Cannot read {path}: {error}.')
        except ValidationError as error:
            raise DataIOError(
                f'{path} is not a valid {self.schema.__name__}:\n{error}'
            )

    def digest(self, obj: SchemaType) -> str:
        return hashlib.sha256(self.dumps(obj).encode('utf-8')).hexdigest()
