from setuptools import setup

with open("README.md") as fh:
    long_description = fh.read()

setup(
    name="distorder",
    version="0.1",
    description="Distributed-order time-fractional diffusion: forward solves, "
    "property checks and recovery of the order weight.",
    long_description=long_description,
    long_description_content_type="text/markdown",
    license="MIT License",
    packages=["distorder"],
    package_dir={"distorder": "lab_home/distorder"},
    install_requires=["numpy>=1.20", "scipy>=1.7"],
    entry_points={"console_scripts": ["distorder=distorder.cli:main"]},
    python_requires=">=3.8",
)
