from setuptools import find_packages, setup

setup(
    name='bsde-cert',
    version='0.3.0',
    description='Monte Carlo certification of a priori estimates for multidimensional BSDEs with integrable data',
    long_description='',
    package_dir={'': 'services/bsde-cert'},
    packages=find_packages(where='services/bsde-cert'),
    python_requires='>=3.9',
    install_requires=[
        'numpy>=1.24',
        'scipy>=1.10',
        'pydantic==2.9.2',
        'python-dotenv==1.0.1',
        'pyyaml==6.0.2',
    ],
    entry_points={'console_scripts': ['bsde-cert=bsde_cert.cli:main']},
    zip_safe=False
)
