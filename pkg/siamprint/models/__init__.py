from .head import FCNHead, fcn_head  # noqa
from .semi_siamese import (  # noqa
    SemiSiameseModel,
    SiameseOutput,
    build_semi_siamese,
    euclidean_change_map,
    semi_siamese_forward,
    transfer_weights,
)
from .unet import Decoder, Encoder, UNet, build_unet, unet_forward  # noqa
