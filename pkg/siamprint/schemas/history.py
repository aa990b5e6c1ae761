from typing import Optional

from pydantic import BaseModel


class EpochRecord(BaseModel):
    epoch: int
    train_loss: float
    val_loss: Optional[float] = None
    val_macro_f1: Optional[float] = None
    seconds: float = 0.0


class TrainHistory(BaseModel):
    records: list[EpochRecord] = []

    def append(self, record: EpochRecord) -> None:
        self.records.append(record)

    def __len__(self) -> int:
        return len(self.records)

    def best(self) -> Optional[EpochRecord]:
        scored = [r for r in self.records if r.val_macro_f1 is not None]
        if not scored:
            return None
        return max(scored, key=lambda record: record.val_macro_f1)
