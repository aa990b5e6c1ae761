NO_DEFECT = 0
OVER_EXTRUSION = 1
UNDER_EXTRUSION = 2

CLASS_NAMES = ('no-defect', 'over-extrusion', 'under-extrusion')
NUM_CLASSES = len(CLASS_NAMES)

MASK_PALETTE = (
    (255, 255, 255),
    (255, 0, 0),
    (0, 255, 0),
)

INK_RGB = (0.0, 0.0, 0.0)
BACKGROUND_RGB = (1.0, 1.0, 1.0)

CAMERA_INK_RGB = (0.12, 0.18, 0.45)
CAMERA_POWDER_RGB = (0.86, 0.83, 0.76)
CAMERA_SPECKLE_SIGMA = 0.04

BN_EPS = 1e-5
BN_MOMENTUM = 0.1
CHANGE_MAP_EPS = 1e-12
PROB_CLIP = 1e-7
ALPHA_FREQUENCY_FLOOR = 1e-6

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

UNET_DEPTH = 5
UNET_POOLINGS = UNET_DEPTH - 1
SPATIAL_MULTIPLE = 2 ** UNET_POOLINGS

GRADCHECK_EPSILON = 1e-5
GRADCHECK_DENOMINATOR_FLOOR = 1e-8
GRADCHECK_MODEL_THRESHOLD = 1e-3
# Sampled coordinates tried per requested one before giving up.
GRADCHECK_RESAMPLE_FACTOR = 20

UNET_COMPARISON_THRESHOLD = 0.5

MANIFEST_FORMAT_VERSION = 1
CHECKPOINT_FORMAT_VERSION = 1
RUN_CONFIG_SCHEMA_VERSION = 1

MANIFEST_FILE = 'manifest.json'
CHECKPOINT_FILE = 'checkpoint.bin'
LAST_CHECKPOINT_FILE = 'last.bin'
HISTORY_FILE = 'history.csv'
RESOLVED_CONFIG_FILE = 'resolved_config.yaml'
REPORT_JSON_FILE = 'report.json'
REPORT_TABLE_FILE = 'report.txt'

HISTORY_COLUMNS = (
    'epoch', 'train_loss', 'val_loss', 'val_macro_f1', 'seconds',
)
# Wall-clock columns; the only history cells that differ between reruns.
HISTORY_TIMING_COLUMNS = ('seconds',)

EXIT_OK = 0
EXIT_GRADCHECK = 1
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_NUMERIC = 4
