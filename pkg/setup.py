from pathlib import Path

from setuptools import find_packages, setup

requirements = [
    line.split('#')[0].strip()
    for line in Path(__file__).with_name('requirements.txt').read_text(encoding='utf-8').splitlines()
    if line.split('#')[0].strip()
]

setup(
    name='qtl-dementia',
    version='1.0.0',
    description='Transferencia de aprendizaje cuántica (CNN congelada + red cuántica vestida) para MRI',
    packages=find_packages(include=['src', 'src.*']),
    python_requires='>=3.9',
    install_requires=[r for r in requirements if not r.startswith(('pytest', 'black', 'flake8', 'mypy'))],
    extras_require={'dev': [r for r in requirements if r.startswith(('pytest', 'black', 'flake8', 'mypy'))]},
    entry_points={'console_scripts': ['qtl=src.cli:main']},
)
