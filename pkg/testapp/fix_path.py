import os
import sys


def fix_path():
    current_folder = os.path.abspath(os.path.dirname(__file__))
    lib_path = os.path.join(current_folder, "libs")
    koopnet_path = os.path.abspath(os.path.join(current_folder, os.pardir))

    if os.path.isdir(lib_path) and lib_path not in sys.path:
        sys.path.insert(0, lib_path)

    if koopnet_path not in sys.path:
        sys.path.insert(0, koopnet_path)
