from siamprint.main import cli

cli(prog_name='siamprint')
