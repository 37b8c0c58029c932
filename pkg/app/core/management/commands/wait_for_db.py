"""
Django command to wait for the run database before recording results.
"""
import time

from psycopg2 import OperationalError as Psycopg2OpError

from django.core.management.base import BaseCommand, CommandError
from django.db.utils import OperationalError


class Command(BaseCommand):
    help = 'Block until the default database accepts connections.'

    def add_arguments(self, parser):
        parser.add_argument(
            '--timeout', type=int, default=0,
            help='Give up after this many seconds (0 waits forever).',
        )

    def handle(self, *args, **options):
        timeout = options['timeout']
        self.stdout.write('Waiting for database...')
        waited = 0
        while True:
            try:
                self.check(databases=['default'])
                break
            except (Psycopg2OpError, OperationalError):
                if timeout and waited >= timeout:
                    raise CommandError(
                        f'Database unavailable after {waited} seconds'
                    )
                self.stdout.write('Database unavailable, waiting 1 second...')
                time.sleep(1)
                waited += 1
        self.stdout.write(self.style.SUCCESS('Database available'))
