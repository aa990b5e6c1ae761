from .dataset import gen_data  # noqa
from .diagnostics import gradcheck_command  # noqa
from .evaluation import compare, eval_command, predict_command  # noqa
from .training import pretrain, train, train_baseline  # noqa
