from setuptools import find_packages, setup

setup(
    name='ProteinRiskBench',
    version='0.1.0',
    description='Risk-aware benchmarking of Bayesian-optimization models on protein fitness landscapes',
    author='Christopher Neely',
    author_email='christopher.neely1200@gmail.com',
    license='GPL-3.0',
    packages=find_packages(exclude=['tests']),
    python_requires='>=3.10',
    install_requires=[
        'numpy>=1.24',
        'scipy>=1.10',
        'scikit-learn>=1.3',
        'torch>=2.0',
        'pandas>=1.5',
        'tqdm>=4.64',
        'matplotlib>=3.7',
        'plumbum>=1.8',
    ],
    entry_points={
        'console_scripts': ['riskbench=riskbench.cli:RiskBench.run'],
    },
    zip_safe=False
)
