from importlib.machinery import SourceFileLoader
import os

from setuptools import find_packages, setup

harnack_core = SourceFileLoader("harnack", "./harnack/core/__init__.py").load_module()

with open(os.path.join(os.path.dirname(__file__), "README.md")) as f:
    long_description = f.read()

tests_require = ["requests>=2.0,<3.0"]
exclude_packages = ("harnack.core.tests",) \
    if not os.getenv("HARNACK_SETUP_INCLUDE_TESTS", False) else ()

setup(
    name="harnack-verify",
    description="Numerical verification of Li-Yau gradient bounds for positive heat flows "
                "on surfaces with integral Ricci curvature bounds.",
    long_description=long_description,
    long_description_content_type="text/markdown",
    version=harnack_core.__version__,
    license="Apache-2.0",
    packages=find_packages(exclude=exclude_packages),
    namespace_packages=["harnack"],
    entry_points={
        "console_scripts": ["harnack=harnack.__main__:main"],
    },
    keywords=["li-yau", "heat equation", "ricci curvature", "numerical verification"],
    install_requires=[
        "numpy>=1.17,<2.0",
        "scipy>=1.3,<2.0",
        "sympy>=1.4,<2.0",
        "jsonschema>=3.0,<4.0",
        "stringcase>=1.2.0,<2.0",
        "pympler>=0.5,<2.0",
        "cachetools>=2.0,<3.0",
        "configargparse>=0.13,<2.0",
        "humanfriendly>=4.0,<5.0",
        "modelforge>=0.13.4,<0.14.0",
        "typing;python_version<'3.5'",
        "prometheus_client == 0.6.0",
    ],
    python_requires=">=3.5",
    extras_require={
        "test": tests_require,
    },
    tests_require=tests_require,
    package_data={"": ["../license.md", "README.md", "../requirements.txt"],
                  "harnack.core": ["scenario.schema.json", "scenarios/*.json"],
                  },
    classifiers=[
        "Development Status :: 4 - Beta",
        "Environment :: Console",
        "Intended Audience :: Science/Research",
        "License :: OSI Approved :: Apache Software License",
        "Operating System :: POSIX",
        "Programming Language :: Python :: 3.5",
        "Programming Language :: Python :: 3.6",
        "Programming Language :: Python :: 3.7",
        "Topic :: Scientific/Engineering :: Mathematics",
    ],
)
