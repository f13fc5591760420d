import sys

from recipes import RECIPES, main

if __name__ == "__main__":
    sys.exit(main(list(RECIPES)))
