import sys

from recipes import main

if __name__ == "__main__":
    sys.exit(main(["fig2a"]))
