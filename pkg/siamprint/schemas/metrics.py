from pydantic import BaseModel, Field

EMPTY_CLASS_CONVENTION = (
    'A class with no true and no predicted pixels scores precision, recall, '
    'F1 and IoU of 1.0.'
)


class ClassScores(BaseModel):
    name: str
    precision: float = Field(..., ge=0.0, le=1.0)
    recall: float = Field(..., ge=0.0, le=1.0)
    f1: float = Field(..., ge=0.0, le=1.0)
    iou: float = Field(..., ge=0.0, le=1.0)
    support: int = Field(..., ge=0)


class MetricsReport(BaseModel):
    accuracy: float = Field(..., ge=0.0, le=1.0)
    macro_f1: float = Field(..., ge=0.0, le=1.0)
    classes: list[ClassScores]
    confusion: list[list[int]]
    pixels: int
    samples: int = 0
    empty_class_convention: str = EMPTY_CLASS_CONVENTION

    def f1(self, name: str) -> float:
        for scores in self.classes:
            if scores.name == name:
                return scores.f1
        raise KeyError(name)


class ArmSummary(BaseModel):
    arm: str
    runs: int
    accuracy: float
    macro_f1: float
    class_f1: list[float]
    macro_f1_values: list[float]
