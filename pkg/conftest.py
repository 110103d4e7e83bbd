import os

import django

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'opf_project.settings')
django.setup()
