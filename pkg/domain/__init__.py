# -*- coding: utf-8 -*-

CODE_VERSION = "0.3.0"
