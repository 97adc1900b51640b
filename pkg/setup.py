import setuptools

with open("README.md", "r", encoding="utf-8") as fh:
    long_description = fh.read()

setuptools.setup(
    name="lorentz-transport",
    version="0.1.0",
    description="Optimal transport for the Lorentzian cost c2 on Minkowski space: solver, potentials, transport "
                "maps and regularity checks.",
    long_description=long_description,
    long_description_content_type="text/markdown",
    classifiers=[
        "Programming Language :: Python :: 3",
        "License :: OSI Approved :: MIT License",
        "Operating System :: OS Independent",
        "Topic :: Scientific/Engineering :: Mathematics",
    ],
    packages=["lorentz_transport"],
    python_requires=">=3.8",
    install_requires=[
        "numpy>=1.20",
        "scipy>=1.9",
        "networkx>=2.6",
    ],
    extras_require={
        "tests": ["pytest>=7"],
    },
    entry_points={
        "console_scripts": ["lorentz-transport=lorentz_transport.cli:run"],
    },
)
