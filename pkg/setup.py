import os

from setuptools import find_packages, setup

__version__ = "0.1.0"

DISTNAME = "trailercf"
DESCRIPTION = "Temporal convolution hybrid collaborative filtering for cold-start movie recommendation"
LICENSE = "new BSD"

long_description = open(os.path.join(os.path.dirname(__file__), "README.md"), "r").read()

setup(
    name=DISTNAME,
    version=__version__,
    description=DESCRIPTION,
    license=LICENSE,
    package_dir={"": "src"},
    packages=find_packages(where="src"),
    include_package_data=True,
    classifiers=[
        # trove classifiers
        # the full list is here: https://pypi.python.org/pypi?%3aaction=list_classifiers
        "Development Status :: 2 - Pre-Alpha",
        "Programming Language :: Python",
        "Topic :: Scientific/Engineering",
        "Operating System :: OS Independent",
    ],
    python_requires=">=3.9",
    install_requires=[
        "pandas>=1.5.0",
        "scikit-learn",
        "scipy",
        "numpy>=1.24.3",
        "matplotlib",
        "tqdm",
    ],
    extras_require={
        "test": ["pytest"],
        "docs": ["sphinx>=4.0", "sphinx_rtd_theme>=0.5", "sphinx_togglebutton", "sphinx_math_dollar", "sphinx-gallery"],
    },
    entry_points={"console_scripts": ["trailercf=trailercf.cli:main"]},
    long_description=long_description,
    long_description_content_type="text/markdown",
)
