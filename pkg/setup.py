from setuptools import setup, find_packages # Always prefer setuptools over distutils
from codecs import open # To use a consistent encoding
from os import path
here = path.abspath(path.dirname(__file__))

with open(path.join(here, 'README.md'), encoding='utf-8') as f:
    long_description = f.read()

description='Visuo-tactile action chunking policies, trained and evaluated in plain numpy'

setup(
    name='pyvitac',
    version='0.1',
    packages=find_packages(exclude=['tests']),
    package_data={'pyvitac': ['schemes/*.scheme']},
    description=description,
    long_description=long_description,
    license='MIT',
    classifiers=[
        'Development Status :: 3 - Alpha',
        'Intended Audience :: Science/Research',
        'License :: OSI Approved :: MIT License',
        'Programming Language :: Python :: 3',
        'Topic :: Scientific/Engineering :: Artificial Intelligence',
    ],
    keywords='robotics imitation-learning tactile transformer',
    install_requires=['numpy'],
    extras_require={'test': ['pytest']},
    entry_points={'console_scripts': ['pyvitac=pyvitac.cli:main']},
)
