import click

from siamprint.cli.commands import (
    compare,
    eval_command,
    gen_data,
    gradcheck_command,
    predict_command,
    pretrain,
    train,
    train_baseline,
)

COMMANDS = (
    gen_data,
    pretrain,
    train,
    train_baseline,
    eval_command,
    predict_command,
    gradcheck_command,
    compare,
)


def include_commands(group: click.Group) -> click.Group:
    for command in COMMANDS:
        group.add_command(command)
    return group
