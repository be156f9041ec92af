# Copyright (c) 2020, ISACLAB DEVELOPERS.
# Root-level shim so `pip install -e .` from the repo root installs the
# package that lives under python/ (metadata mirrors python/setup.py).
from setuptools import find_packages, setup

install_requires = ["numpy", "scipy", "numba>=0.49", "toml", "pandas"]

setup(
    name="isaclab",
    version="0.1.0",
    description="isaclab - hybrid STAR-RIS ISAC simulation lab",
    author="isaclab developers",
    license="Apache 2.0",
    classifiers=[
        "Intended Audience :: Science/Research",
        "Topic :: Scientific/Engineering",
        "License :: OSI Approved :: Apache Software License",
        "Programming Language :: Python",
        "Programming Language :: Python :: 3.8",
    ],
    python_requires=">=3.8",
    package_dir={"": "python"},
    packages=find_packages(where="python", include=["isaclab", "isaclab.*"]),
    package_data={"isaclab": ["data/*.toml"]},
    entry_points={"console_scripts": ["isac-lab=isaclab.cli:main"]},
    install_requires=install_requires,
    extras_require={"test": ["pytest"]},
    zip_safe=False,
)
