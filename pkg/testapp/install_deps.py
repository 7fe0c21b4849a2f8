import os
import shutil
import subprocess


PROJECT_DIR = os.path.abspath(os.path.dirname(__file__))
REQUIREMENTS_FILE = os.path.join(PROJECT_DIR, "requirements.txt")
TARGET_DIR = os.path.join(PROJECT_DIR, "libs")

DJANGO_VERSION = os.environ.get("DJANGO_VERSION")

if __name__ == '__main__':

    if os.path.exists(TARGET_DIR):
        shutil.rmtree(TARGET_DIR)

    print("Running pip...")
    args = ["pip", "install", "-r", REQUIREMENTS_FILE, "-t", TARGET_DIR, "-I"]
    subprocess.check_call(args)

    if DJANGO_VERSION:
        print("Installing Django {}".format(DJANGO_VERSION))
        args = ["pip", "install", "--no-deps", "Django=={}.*".format(DJANGO_VERSION), "-t", TARGET_DIR, "-I"]
        subprocess.check_call(args)
