#!/usr/bin/env python3
# -*- coding: utf-8 -*-

import sys

from ui.cli import dispatch


def main():
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
