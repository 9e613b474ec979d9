import shutil
import subprocess
from pathlib import Path

from setuptools import setup
from setuptools.command.build_py import build_py

HERE = Path(__file__).resolve().parent
WORKSPACE = HERE.parent.parent


class CargoBuildPy(build_py):
    """Build the cdylib with cargo and drop it into the wrapper package."""

    def run(self):
        subprocess.run(
            [
                "cargo",
                "build",
                "-p",
                "routegen-py",
                "--release",
                "--features",
                "extension-module",
            ],
            cwd=WORKSPACE,
            check=True,
        )
        lib = WORKSPACE / "target" / "release" / "libroutegen_py.so"
        dest = HERE / "python" / "routegen_py" / "routegen_py.so"
        shutil.copy2(lib, dest)
        super().run()


setup(cmdclass={"build_py": CargoBuildPy})
