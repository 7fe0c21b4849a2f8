import os
from setuptools import setup, find_packages


NAME = 'koopnet'
PACKAGES = find_packages(exclude=["testapp", "testapp.*"])
DESCRIPTION = 'Deep Koopman control over fading wireless links with drift-plus-penalty sensor scheduling'
LONG_DESCRIPTION = open(os.path.join(os.path.dirname(__file__), 'README.md')).read()
AUTHOR = 'The koopnet contributors'

INSTALL_REQUIRES = [
    "Django>=3.2",
    "PyYAML>=5.4",
    "numpy>=1.22",
    "scipy>=1.8",
]

EXTRAS = {
    "docs": ["mkdocs"],
}

setup(
    name=NAME,
    version='0.1.0',
    packages=PACKAGES,

    # metadata for upload to PyPI
    author=AUTHOR,
    description=DESCRIPTION,
    long_description=LONG_DESCRIPTION,
    long_description_content_type="text/markdown",
    keywords=["koopman", "lqr", "wireless control", "age of information", "django"],
    classifiers=[
        'Development Status :: 3 - Alpha',
        'Framework :: Django',
        'Intended Audience :: Science/Research',
        'License :: OSI Approved :: BSD License',
        'Operating System :: OS Independent',
        'Programming Language :: Python',
        'Programming Language :: Python :: 3',
    ],

    include_package_data=True,
    python_requires=">=3.8",
    # dependencies
    install_requires=INSTALL_REQUIRES,
    extras_require=EXTRAS,
    entry_points={
        "console_scripts": [
            "koopnet=koopnet.core.management:main",
        ],
    },
)
