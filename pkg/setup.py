from setuptools import setup

setup(
    name='pvservo',
    version='0.0.0',
    description='Visual servoing and NMPC for quadrotor inspection of photovoltaic arrays, in simulation',
    packages=['pvservo'],
    license='Apache License 2.0',
    python_requires='>=3.8',
    setup_requires=[],
    install_requires=['numpy', 'scipy', 'dask', 'pydantic >= 2'],
    extras_require={'plots': ['matplotlib']},
    tests_require=['pytest'],
    entry_points={'console_scripts': ['pvservo = pvservo.cli:main']},
)
