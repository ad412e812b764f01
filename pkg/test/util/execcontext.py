import subprocess
import sys
import tempfile
from configparser import ConfigParser
from pathlib import Path
from typing import Dict, Any

# We run the gdro in the dir above this script, not the system-wide
# installed version, which you probably don't mean to test.
gdro_path = str(Path(__file__).absolute().parent.parent.parent.joinpath("gdro"))


class ExecContext:
    """Creates a temporary experiment file and lets you call gdro with it
    easily. Cleans up temp files afterwards.

    Relative paths in the experiment file (the dataset, the output
    directory) resolve against the temporary directory.

    Example:

    with ExecContext(config="[experiment]\nalgo = aleg\ndata = d.gdro") as context:
        context.call("gen", "--m", "2", "--dim", "3", "--out", context.path("d.gdro"))
        context.run()

    """

    def __init__(self, config: str = ""):
        self._tmpdir = tempfile.TemporaryDirectory(prefix="groupdro-test-")
        self.dir = Path(self._tmpdir.name)
        self.cfg_path = self.dir.joinpath("experiment.cfg")

        self.cfg_path.write_text(config)

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        self._tmpdir.cleanup()

    def path(self, *parts) -> str:
        return str(self.dir.joinpath(*parts))

    def call(self, *args, env=None):
        return subprocess.run(
            [sys.executable, gdro_path] + list(args),
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
            universal_newlines=True,
            env=env)

    def run(self, *args):
        return self.call(*(list(args) + ["run", str(self.cfg_path)]))

    def change_config(self, section: str, params: Dict[str, Any]) -> None:
        config = ConfigParser(interpolation=None)
        config.read(str(self.cfg_path))
        if not config.has_section(section):
            config.add_section(section)
        for name, value in params.items():
            config[section][name] = str(value)
        with self.cfg_path.open('w') as file:
            config.write(file)
