import numpy as np

from siamprint.autodiff import functional as F
from siamprint.autodiff.tensor import Tensor
from siamprint.constants import NUM_CLASSES
from siamprint.core.exceptions import ContractViolation
from siamprint.models.base import ParameterGroup
from siamprint.schemas.config import HeadConfig


class FCNHead(ParameterGroup):
    """conv3x3(1->h)-ReLU, conv3x3(h->h)-ReLU, conv1x1(h->3), softmax.

    Output channels are ordered (no-defect, over-extrusion,
    under-extrusion).
    """

    def __init__(self, config: HeadConfig, rng: np.random.Generator):
        super().__init__()
        self.config = config
        hidden = config.hidden_channels
        self.add_conv('conv1', 1, hidden, 3, rng)
        self.add_conv('conv2', hidden, hidden, 3, rng)
        self.add_conv('classifier', hidden, NUM_CLASSES, 1, rng)
        if config.zero_init:
            for tensor in self.params.values():
                tensor.data[...] = 0.0

    def reinitialize(self, rng: np.random.Generator) -> None:
        fresh = FCNHead(self.config, rng)
        self.copy_from(fresh)

    def forward(self, change_map: Tensor) -> Tensor:
        if change_map.ndim != 4 or change_map.shape[1] != 1:
            raise ContractViolation(
                f'fcn_head expects an (N, 1, H, W) change map, got '
                f'{change_map.shape}.'
            )
        x = F.relu(self.conv('conv1', change_map))
        x = F.relu(self.conv('conv2', x))
        return F.softmax_channels(self.conv('classifier', x, padding=0))


def fcn_head(head: FCNHead, change_map: Tensor) -> Tensor:
    return head.forward(change_map)
