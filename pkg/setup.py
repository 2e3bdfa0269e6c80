from setuptools import setup, find_packages

setup(
    name="coeffinv",
    version="1.0.0",
    packages=find_packages(exclude=["tests", "examples*"]),
    install_requires=[
        'numpy>=1.21.0',
        'scipy>=1.12.0',
        'matplotlib>=3.4.0',
        'psutil>=5.9.0',
    ],
    entry_points={
        'console_scripts': [
            'coeffinv=src.main:main',
        ],
    },
    description="Two-stage reconstruction of a dielectric coefficient from time-domain boundary traces",
    long_description=open('README.md').read(),
    long_description_content_type="text/markdown",
    keywords="inverse problems, wave equation, layer stripping, adaptive finite elements, Tikhonov",
    classifiers=[
        "Development Status :: 4 - Beta",
        "Intended Audience :: Science/Research",
        "Topic :: Scientific/Engineering :: Mathematics",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
    ],
    python_requires='>=3.9',
)
